#include "vigor/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace vigor {

namespace {

constexpr double kLogitClamp = 30.0;

double softplus(double x) {
  // log(1 + e^x), stable for large |x|
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_labels(const nn::SeqBatch& logits, const std::vector<int>& labels) {
  if (logits.size() != labels.size()) {
    throw InputError("bce: one label per sequence required");
  }
  for (const auto& y : logits) {
    if (y.cols() != 1) throw InputError("bce: logits must have one channel");
  }
}

}  // namespace

double bce_full(const nn::SeqBatch& logits, const std::vector<int>& labels) {
  check_labels(logits, labels);
  double total = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double yhat = std::clamp(logits[i].sum(), -kLogitClamp, kLogitClamp);
    // -log sigma(x) = softplus(-x); -log(1 - sigma(x)) = softplus(x)
    total += labels[i] == 1 ? softplus(-yhat) : softplus(yhat);
  }
  return total / static_cast<double>(logits.size());
}

nn::LossResult bce_full_with_grad(const nn::SeqBatch& logits, const std::vector<int>& labels) {
  check_labels(logits, labels);
  nn::LossResult out;
  out.dlogits.resize(logits.size());
  const double inv_b = 1.0 / static_cast<double>(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    const double raw = logits[i].sum();
    const double yhat = std::clamp(raw, -kLogitClamp, kLogitClamp);
    out.value += (labels[i] == 1 ? softplus(-yhat) : softplus(yhat)) * inv_b;
    const double d = (std::abs(raw) >= kLogitClamp)
                         ? 0.0
                         : (sigmoid(yhat) - static_cast<double>(labels[i])) * inv_b;
    out.dlogits[i] = Eigen::MatrixXd::Constant(logits[i].rows(), 1, d);
  }
  return out;
}

double bce_stepwise(const nn::SeqBatch& logits, const std::vector<int>& labels) {
  check_labels(logits, labels);
  double total = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    for (Eigen::Index t = 0; t < logits[i].rows(); ++t) {
      const double y = std::clamp(logits[i](t, 0), -kLogitClamp, kLogitClamp);
      total += labels[i] == 1 ? softplus(-y) : softplus(y);
    }
  }
  return total / static_cast<double>(logits.size());
}

nn::LossResult bce_stepwise_with_grad(const nn::SeqBatch& logits,
                                      const std::vector<int>& labels) {
  check_labels(logits, labels);
  nn::LossResult out;
  out.dlogits.resize(logits.size());
  const double inv_b = 1.0 / static_cast<double>(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    out.dlogits[i].resize(logits[i].rows(), 1);
    for (Eigen::Index t = 0; t < logits[i].rows(); ++t) {
      const double raw = logits[i](t, 0);
      const double y = std::clamp(raw, -kLogitClamp, kLogitClamp);
      out.value += (labels[i] == 1 ? softplus(-y) : softplus(y)) * inv_b;
      out.dlogits[i](t, 0) =
          (std::abs(raw) >= kLogitClamp)
              ? 0.0
              : (sigmoid(y) - static_cast<double>(labels[i])) * inv_b;
    }
  }
  return out;
}

std::vector<nn::LayerSpec> DiscriminatorConfig::build_layers() const {
  std::vector<nn::LayerSpec> layers;
  for (int l = 0; l < conv_layers; ++l) {
    layers.push_back(nn::LayerSpec::conv1d(channels, kernel_size));
    if (batchnorm) layers.push_back(nn::LayerSpec::batchnorm1d());
    layers.push_back(nn::LayerSpec::relu());
    if (dropout_rate > 0.0) layers.push_back(nn::LayerSpec::dropout(dropout_rate));
  }
  layers.push_back(nn::LayerSpec::dense(1));  // per-step logit readout
  return layers;
}

Eigen::MatrixXd RatioEstimator::normalize(const Eigen::MatrixXd& values) const {
  if (values.cols() != feature_mean.size()) {
    throw InputError("RatioEstimator: feature width mismatch");
  }
  return (values.rowwise() - feature_mean.transpose()).array().rowwise() /
         feature_std.transpose().array();
}

RatioEstimator train_ratio_estimator(const std::vector<DescriptorSequence>& expert,
                                     const std::vector<DescriptorSequence>& policy,
                                     const DiscriminatorConfig& cfg, std::uint64_t seed) {
  if (expert.empty() || policy.empty()) {
    throw InputError("train_ratio_estimator: both classes must be nonempty");
  }
  if (expert.size() != policy.size()) {
    throw InputError("train_ratio_estimator: classes must be equally sized");
  }
  if (cfg.ensemble_size < 1) throw ConfigError("train_ratio_estimator: ensemble_size >= 1");
  const int features = expert.front().features();

  RatioEstimator est;
  // Frozen per-feature statistics over the union of both classes.
  long n_rows = 0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(features);
  for (const auto* cls : {&expert, &policy}) {
    for (const auto& s : *cls) {
      if (s.features() != features) {
        throw InputError("train_ratio_estimator: inconsistent feature width");
      }
      mean += s.values.colwise().sum().transpose();
      n_rows += s.steps();
    }
  }
  mean /= static_cast<double>(n_rows);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(features);
  for (const auto* cls : {&expert, &policy}) {
    for (const auto& s : *cls) {
      var += (s.values.rowwise() - mean.transpose())
                 .array()
                 .square()
                 .colwise()
                 .sum()
                 .matrix()
                 .transpose();
    }
  }
  var /= static_cast<double>(n_rows);
  est.feature_mean = mean;
  est.feature_std = (var.array().sqrt() + 1e-8).matrix();

  nn::SeqBatch all_inputs;
  std::vector<int> all_labels;
  for (const auto& s : expert) {
    all_inputs.push_back(est.normalize(s.values));
    all_labels.push_back(0);
  }
  for (const auto& s : policy) {
    all_inputs.push_back(est.normalize(s.values));
    all_labels.push_back(1);
  }
  const int n_total = static_cast<int>(all_inputs.size());

  // Stratified validation split: the tail of a per-class shuffle.
  const bool early_stop = n_total >= cfg.min_sequences_for_early_stop;
  est.quality = early_stop ? TrainQuality::Ok : TrainQuality::Degraded;
  const int n_class = static_cast<int>(expert.size());
  const int n_val_per_class =
      early_stop ? std::max(1, static_cast<int>(std::floor(n_class * cfg.validation_split)))
                 : 0;
  std::vector<int> train_idx, val_idx;
  {
    Rng rng(derive_seed(seed, 0xd15c));
    std::vector<int> expert_idx(n_class), policy_idx(n_class);
    for (int i = 0; i < n_class; ++i) {
      expert_idx[i] = i;
      policy_idx[i] = n_class + i;
    }
    rng.shuffle(expert_idx);
    rng.shuffle(policy_idx);
    for (const auto& idx : {expert_idx, policy_idx}) {
      for (int i = 0; i < n_class; ++i) {
        (i < n_class - n_val_per_class ? train_idx : val_idx).push_back(idx[i]);
      }
    }
  }

  const auto loss_fn = [&](const std::vector<int>& labels) -> nn::SequenceLoss {
    if (cfg.loss == DiscriminatorLoss::Stepwise) {
      return [labels](const nn::SeqBatch& logits) {
        return bce_stepwise_with_grad(logits, labels);
      };
    }
    return [labels](const nn::SeqBatch& logits) { return bce_full_with_grad(logits, labels); };
  };

  const auto batch_loss_value = [&](nn::Network& net, const std::vector<int>& indices) {
    nn::SeqBatch inputs;
    std::vector<int> labels;
    for (int i : indices) {
      inputs.push_back(all_inputs[i]);
      labels.push_back(all_labels[i]);
    }
    const nn::SeqBatch logits = net.forward_batch(inputs, nn::Mode::Eval);
    return cfg.loss == DiscriminatorLoss::Stepwise ? bce_stepwise(logits, labels)
                                                   : bce_full(logits, labels);
  };

  std::vector<std::optional<nn::Network>> members(cfg.ensemble_size);
  parallel_for(cfg.ensemble_size, cfg.workers, [&](int member) {
    const std::uint64_t member_seed = derive_seed(seed, 0x5e4, member);
    nn::Network net(features, cfg.build_layers(), member_seed);
    nn::AdamState adam;
    Rng shuffle_rng(derive_seed(member_seed, 0xba7c4));

    Eigen::VectorXd best_params = net.parameters();
    auto best_stats = net.running_stats();
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<int> order = train_idx;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      shuffle_rng.shuffle(order);
      for (int start = 0; start < static_cast<int>(order.size());
           start += cfg.batch_size) {
        const int count =
            std::min<int>(cfg.batch_size, static_cast<int>(order.size()) - start);
        nn::SeqBatch inputs;
        std::vector<int> labels;
        inputs.reserve(count);
        for (int i = 0; i < count; ++i) {
          inputs.push_back(all_inputs[order[start + i]]);
          labels.push_back(all_labels[order[start + i]]);
        }
        Eigen::VectorXd grad;
        net.loss_and_gradient(inputs, loss_fn(labels), nn::Mode::Train,
                              derive_seed(member_seed, epoch, start), &grad);
        adam_step(net, grad, cfg.learning_rate, adam);
      }

      if (early_stop) {
        const double val = batch_loss_value(net, val_idx);
        if (val < best_val - 1e-12) {
          best_val = val;
          best_params = net.parameters();
          best_stats = net.running_stats();
          since_best = 0;
        } else if (++since_best >= cfg.patience) {
          break;
        }
      }
    }
    if (early_stop) {
      net.set_parameters(best_params);
      net.set_running_stats(best_stats);
    }
    members[member] = std::move(net);
  });
  for (auto& m : members) est.ensemble.push_back(std::move(*m));
  return est;
}

double log_ratio(const RatioEstimator& est, const DescriptorSequence& sequence) {
  if (est.ensemble.empty()) throw InputError("log_ratio: empty ensemble");
  const Eigen::MatrixXd normalized = est.normalize(sequence.values);
  double total = 0.0;
  for (const auto& net : est.ensemble) {
    total += net.forward(normalized).sum();
  }
  return total / static_cast<double>(est.ensemble.size());
}

}  // namespace vigor
