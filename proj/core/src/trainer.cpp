#include "vigor/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vigor {

Trainer::Trainer(DemoSet demos, std::vector<ReacherContext> test_contexts, ReacherTask task,
                 TrainerConfig cfg)
    : demos_(std::move(demos)),
      train_contexts_(demos_.contexts),
      test_contexts_(std::move(test_contexts)),
      task_(task),
      cfg_(cfg) {
  if (train_contexts_.empty()) throw InputError("Trainer: no training contexts");
  all_contexts_ = train_contexts_;
  all_contexts_.insert(all_contexts_.end(), test_contexts_.begin(), test_contexts_.end());

  // Expert descriptors exist only for train contexts; test contexts supply
  // policy samples alone.
  for (size_t ci = 0; ci < train_contexts_.size(); ++ci) {
    for (const auto& w : demos_.demos[ci]) {
      DescriptorSequence seq = descriptors(w, train_contexts_[ci], task_);
      seq.source = SequenceSource::Expert;
      expert_descriptors_.push_back(std::move(seq));
    }
  }
  if (expert_descriptors_.empty()) throw InputError("Trainer: empty demo set");
}

const ReacherContext& Trainer::context_by_id(const std::string& id) const {
  for (const auto& c : all_contexts_) {
    if (c.id == id) return c;
  }
  throw InputError("Trainer: unknown context id " + id);
}

TrainState Trainer::initial_state() const {
  TrainState state;
  for (size_t i = 0; i < all_contexts_.size(); ++i) {
    const auto& c = all_contexts_[i];
    state.policies.emplace(
        c.id, MixturePolicy::initial(c.id, task_.weight_dim(), cfg_.n_components,
                                     cfg_.sigma_init, derive_seed(cfg_.seed, 0x1417, i)));
  }
  return state;
}

RatioEstimator Trainer::train_discriminator(const TrainState& state,
                                            std::uint64_t iter_seed) const {
  // Equal class sizes: draw ceil(E / |c|) per context, pool, then subsample
  // back to E so both classes match exactly.
  const int n_expert = static_cast<int>(expert_descriptors_.size());
  const int n_contexts = static_cast<int>(all_contexts_.size());
  const int per_context = (n_expert + n_contexts - 1) / n_contexts;

  std::vector<DescriptorSequence> policy_pool;
  policy_pool.reserve(per_context * n_contexts);
  for (int ci = 0; ci < n_contexts; ++ci) {
    const auto& c = all_contexts_[ci];
    const auto& policy = state.policies.at(c.id);
    const auto draws = sample(policy, per_context, derive_seed(iter_seed, 0xd0a3, ci));
    for (const auto& draw : draws) {
      DescriptorSequence seq = descriptors(
          ProMPWeights::from_flat(draw.weights, task_.basis.n_basis, task_.dofs), c, task_);
      seq.source = SequenceSource::Policy;
      policy_pool.push_back(std::move(seq));
    }
  }
  if (static_cast<int>(policy_pool.size()) > n_expert) {
    Rng rng(derive_seed(iter_seed, 0x5b5a));
    std::vector<int> order(policy_pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    std::vector<DescriptorSequence> subsampled;
    subsampled.reserve(n_expert);
    for (int i = 0; i < n_expert; ++i) subsampled.push_back(std::move(policy_pool[order[i]]));
    policy_pool = std::move(subsampled);
  }

  DiscriminatorConfig disc_cfg = cfg_.discriminator;
  disc_cfg.workers = cfg_.workers;
  return train_ratio_estimator(expert_descriptors_, policy_pool, disc_cfg,
                               derive_seed(iter_seed, 0xd15c0));
}

std::map<std::string, RatioFn> Trainer::discriminator_ratios(TrainState& state,
                                                             std::uint64_t iter_seed) const {
  state.estimator = train_discriminator(state, iter_seed);
  const RatioEstimator* est = &*state.estimator;
  std::map<std::string, RatioFn> ratios;
  for (const auto& c : all_contexts_) {
    const ReacherContext* ctx = &context_by_id(c.id);
    ratios[c.id] = [this, est, ctx](const Eigen::VectorXd& w) {
      return log_ratio(*est, descriptors(ProMPWeights::from_flat(w, task_.basis.n_basis,
                                                                 task_.dofs),
                                         *ctx, task_));
    };
  }
  return ratios;
}

TrainState Trainer::iteration_with_ratios(const TrainState& state,
                                          const RatioProvider& provider, int attempt) const {
  TrainState next = state;
  const std::uint64_t iter_seed =
      derive_seed(cfg_.seed, 0x17e2, state.iteration, attempt);
  const auto ratios = provider(next, iter_seed);

  // Every (context, component) update is independent given frozen ratios.
  const int n_contexts = static_cast<int>(all_contexts_.size());
  const int n_units = n_contexts * cfg_.n_components;
  std::vector<std::optional<GaussianComponent>> updated(n_units);
  parallel_for(n_units, cfg_.workers, [&](int unit) {
    const int ci = unit / cfg_.n_components;
    const int z = unit % cfg_.n_components;
    const auto& context_id = all_contexts_[ci].id;
    const MixturePolicy& policy = next.policies.at(context_id);
    UpdateStatus status = UpdateStatus::Updated;
    const MixturePolicy result =
        update_component_from_ratio(policy, z, ratios.at(context_id), cfg_.trust_region,
                                    derive_seed(iter_seed, ci, z), &status);
    if (status == UpdateStatus::Updated) updated[unit] = result.components[z];
  });
  for (int unit = 0; unit < n_units; ++unit) {
    if (!updated[unit]) continue;
    const int ci = unit / cfg_.n_components;
    const int z = unit % cfg_.n_components;
    next.policies.at(all_contexts_[ci].id).components[z] = std::move(*updated[unit]);
  }
  next.iteration = state.iteration + 1;
  return next;
}

TrainState Trainer::vigor_iteration(const TrainState& state, int attempt) const {
  return iteration_with_ratios(
      state,
      [this](TrainState& s, std::uint64_t iter_seed) {
        return discriminator_ratios(s, iter_seed);
      },
      attempt);
}

IterationMetrics Trainer::compute_metrics(const TrainState& state, int iteration) const {
  IterationMetrics m;
  m.iteration = iteration;
  const std::uint64_t metric_seed = derive_seed(cfg_.seed, 0x3e7, iteration);

  double ratio_accum = 0.0;
  long ratio_count = 0;
  const int n_contexts = static_cast<int>(all_contexts_.size());
  m.context_d1.resize(n_contexts);
  m.context_d2.resize(n_contexts);
  m.context_success.resize(n_contexts);
  std::vector<double> best_distance(n_contexts), best_success(n_contexts);
  parallel_for(n_contexts, cfg_.workers, [&](int ci) {
    const auto& c = all_contexts_[ci];
    const MixturePolicy& policy = state.policies.at(c.id);
    double best = std::numeric_limits<double>::infinity();
    double success_of_best = 0.0;
    double d1_of_best = 0.0;
    double d2_of_best = 0.0;
    for (int z = 0; z < policy.size(); ++z) {
      Rng rng(derive_seed(metric_seed, ci, z));
      double d1 = 0.0;
      double d2 = 0.0;
      double success = 0.0;
      for (int s = 0; s < cfg_.metric_samples; ++s) {
        const Eigen::VectorXd w = policy.components[z].sample(rng);
        const auto d = distance_to_boundaries(
            ProMPWeights::from_flat(w, task_.basis.n_basis, task_.dofs), c, task_);
        d1 += d.first;
        d2 += d.second;
        success += is_success(d) ? 1.0 : 0.0;
      }
      d1 /= cfg_.metric_samples;
      d2 /= cfg_.metric_samples;
      success /= cfg_.metric_samples;
      if (d1 + d2 < best) {
        best = d1 + d2;
        success_of_best = success;
        d1_of_best = d1;
        d2_of_best = d2;
      }
    }
    best_distance[ci] = best;
    best_success[ci] = success_of_best;
    m.context_d1[ci] = d1_of_best;
    m.context_d2[ci] = d2_of_best;
    m.context_success[ci] = success_of_best;
  });

  const int n_train = static_cast<int>(train_contexts_.size());
  for (int ci = 0; ci < n_contexts; ++ci) {
    if (ci < n_train) {
      m.train_distance += best_distance[ci];
      m.train_success += best_success[ci];
    } else {
      m.test_distance += best_distance[ci];
      m.test_success += best_success[ci];
    }
  }
  m.train_distance /= n_train;
  m.train_success /= n_train;
  if (!test_contexts_.empty()) {
    m.test_distance /= static_cast<double>(test_contexts_.size());
    m.test_success /= static_cast<double>(test_contexts_.size());
  }

  if (state.estimator) {
    for (int ci = 0; ci < n_contexts; ++ci) {
      const auto& c = all_contexts_[ci];
      const auto draws = sample(state.policies.at(c.id), 2, derive_seed(metric_seed, 0xa7, ci));
      for (const auto& draw : draws) {
        const auto seq = descriptors(
            ProMPWeights::from_flat(draw.weights, task_.basis.n_basis, task_.dofs), c, task_);
        ratio_accum += std::abs(log_ratio(*state.estimator, seq));
        ++ratio_count;
      }
    }
    m.mean_abs_ratio = ratio_accum / static_cast<double>(ratio_count);
  }
  return m;
}

bool Trainer::converged(const std::vector<IterationMetrics>& history) const {
  const int w = cfg_.convergence_window;
  const int n = static_cast<int>(history.size());
  if (n <= w) return false;
  const double now = history[n - 1].train_distance;
  const double then = history[n - 1 - w].train_distance;
  return std::abs(now - then) / std::max(std::abs(then), 1e-8) < cfg_.convergence_tol;
}

TrainState Trainer::train(
    const std::function<void(const TrainState&, const IterationMetrics&)>& on_iteration)
    const {
  return train(initial_state(), on_iteration);
}

TrainState Trainer::train(
    TrainState state,
    const std::function<void(const TrainState&, const IterationMetrics&)>& on_iteration)
    const {
  while (state.iteration < cfg_.max_iterations) {
    TrainState next = state;
    bool ok = false;
    std::exception_ptr last_error;
    for (int attempt = 0; attempt <= cfg_.retries && !ok; ++attempt) {
      try {
        next = vigor_iteration(state, attempt);
        ok = true;
      } catch (const NumericalError&) {
        last_error = std::current_exception();
      }
    }
    if (!ok) std::rethrow_exception(last_error);

    const IterationMetrics metrics = compute_metrics(next, next.iteration);
    next.history.push_back(metrics);
    state = std::move(next);
    if (on_iteration) on_iteration(state, metrics);
    if (converged(state.history)) break;
  }
  return state;
}

}  // namespace vigor
