#include "vigor/nn.hpp"

#include <cmath>

namespace vigor::nn {

namespace {

// Conv weights are stored as [out_channel][tap][in_channel] so the whole
// kernel maps to one contiguous (C_out x K*C_in) matrix and the convolution
// becomes a single GEMM against the unrolled input.
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConvWeightMap = Eigen::Map<RowMajorMatrix>;
using ConstConvWeightMap = Eigen::Map<const RowMajorMatrix>;

int layer_param_count(const LayerSpec& spec, int in_width) {
  switch (spec.kind) {
    case LayerKind::Dense:
      return spec.width * in_width + spec.width;
    case LayerKind::Conv1d:
      return spec.width * in_width * spec.kernel_size + spec.width;
    case LayerKind::BatchNorm1d:
      return 2 * in_width;  // gamma, beta
    default:
      return 0;
  }
}

int layer_out_width(const LayerSpec& spec, int in_width) {
  switch (spec.kind) {
    case LayerKind::Dense:
    case LayerKind::Conv1d:
      return spec.width;
    default:
      return in_width;
  }
}

// Batches are stacked as (B*T x C); sequence s occupies rows [s*T, (s+1)*T).
// Unrolled conv input: row t holds the K taps around step t within its
// sequence, zero padded at sequence boundaries, column order (tap, channel).
Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, int T, int kernel_size) {
  const int total = static_cast<int>(x.rows());
  const int B = total / T;
  const int C = static_cast<int>(x.cols());
  const int pad = (kernel_size - 1) / 2;
  Eigen::MatrixXd unrolled = Eigen::MatrixXd::Zero(total, kernel_size * C);
  for (int k = 0; k < kernel_size; ++k) {
    const int shift = k - pad;
    const int t0 = std::max(0, -shift);
    const int t1 = std::min(T, T - shift);
    if (t1 <= t0) continue;
    for (int s = 0; s < B; ++s) {
      unrolled.block(s * T + t0, k * C, t1 - t0, C) =
          x.middleRows(s * T + t0 + shift, t1 - t0);
    }
  }
  return unrolled;
}

}  // namespace

struct Network::Trace {
  // activations[l] is the (stacked) input to layer l; the final entry the
  // network output.
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Eigen::MatrixXd> conv_unrolled;     // per layer, im2col reuse
  std::vector<Eigen::MatrixXd> dropout_masks;     // per layer, empty unless dropout
  std::vector<Eigen::VectorXd> bn_mean, bn_var;   // per batchnorm slot
  Mode mode = Mode::Eval;
  int T = 0;
};

Network::Network(int input_width, std::vector<LayerSpec> layers, std::uint64_t init_seed)
    : input_width_(input_width), layers_(std::move(layers)) {
  if (input_width_ < 1) throw ConfigError("Network: input width must be positive");
  int width = input_width_;
  int total = 0;
  int bn_slots = 0;
  for (const auto& spec : layers_) {
    switch (spec.kind) {
      case LayerKind::Dense:
        if (spec.width < 1) throw ConfigError("Network: dense width must be positive");
        break;
      case LayerKind::Conv1d:
        if (spec.width < 1) throw ConfigError("Network: conv channels must be positive");
        if (spec.kernel_size < 1 || spec.kernel_size % 2 == 0) {
          throw ConfigError("Network: conv kernel size must be odd and positive");
        }
        break;
      case LayerKind::Dropout:
        if (spec.dropout_rate < 0.0 || spec.dropout_rate >= 1.0) {
          throw ConfigError("Network: dropout rate must lie in [0, 1)");
        }
        break;
      default:
        break;
    }
    param_offsets_.push_back(total);
    layer_widths_.push_back(width);
    bn_index_.push_back(spec.kind == LayerKind::BatchNorm1d ? bn_slots++ : -1);
    total += layer_param_count(spec, width);
    width = layer_out_width(spec, width);
  }
  output_width_ = width;
  params_.resize(total);

  Rng rng(init_seed);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    const int in = layer_widths_[l];
    double* p = params_.data() + param_offsets_[l];
    if (spec.kind == LayerKind::Dense) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (int i = 0; i < spec.width * in; ++i) p[i] = rng.uniform(-bound, bound);
      for (int i = 0; i < spec.width; ++i) p[spec.width * in + i] = 0.0;
    } else if (spec.kind == LayerKind::Conv1d) {
      const int fan_in = in * spec.kernel_size;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (int i = 0; i < spec.width * fan_in; ++i) p[i] = rng.uniform(-bound, bound);
      for (int i = 0; i < spec.width; ++i) p[spec.width * fan_in + i] = 0.0;
    } else if (spec.kind == LayerKind::BatchNorm1d) {
      for (int i = 0; i < in; ++i) p[i] = 1.0;       // gamma
      for (int i = 0; i < in; ++i) p[in + i] = 0.0;  // beta
      running_stats_.emplace_back(Eigen::VectorXd::Zero(in), Eigen::VectorXd::Ones(in));
    }
  }
}

void Network::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != params_.size()) throw InputError("Network::set_parameters: size mismatch");
  params_ = p;
}

void Network::set_running_stats(std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> stats) {
  if (stats.size() != running_stats_.size()) {
    throw InputError("Network::set_running_stats: slot count mismatch");
  }
  running_stats_ = std::move(stats);
}

Eigen::MatrixXd Network::run_stacked(Eigen::MatrixXd current, int T, Mode mode,
                                     std::uint64_t dropout_seed, Trace* trace) const {
  if (current.cols() != input_width_) throw InputError("Network: input width mismatch");
  if (T < 1 || current.rows() % T != 0) throw InputError("Network: bad sequence length");
  if (trace) {
    trace->mode = mode;
    trace->T = T;
    trace->activations.clear();
    trace->conv_unrolled.assign(layers_.size(), {});
    trace->dropout_masks.assign(layers_.size(), {});
    trace->bn_mean.assign(running_stats_.size(), {});
    trace->bn_var.assign(running_stats_.size(), {});
  }

  Rng dropout_rng(dropout_seed);
  const double n_rows = static_cast<double>(current.rows());
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    const int in = layer_widths_[l];
    const double* p = params_.data() + param_offsets_[l];
    Eigen::MatrixXd next;

    switch (spec.kind) {
      case LayerKind::Dense: {
        const Eigen::Map<const RowMajorMatrix> W(p, spec.width, in);
        const Eigen::Map<const Eigen::VectorXd> b(p + spec.width * in, spec.width);
        next.noalias() = current * W.transpose();
        next.rowwise() += b.transpose();
        break;
      }
      case LayerKind::Conv1d: {
        const int K = spec.kernel_size;
        const ConstConvWeightMap W(p, spec.width, K * in);
        const Eigen::Map<const Eigen::VectorXd> b(p + spec.width * in * K, spec.width);
        Eigen::MatrixXd unrolled = im2col(current, T, K);
        next.noalias() = unrolled * W.transpose();
        next.rowwise() += b.transpose();
        if (trace) trace->conv_unrolled[l] = std::move(unrolled);
        break;
      }
      case LayerKind::Relu:
        next = current.cwiseMax(0.0);
        break;
      case LayerKind::Sigmoid:
        next = (1.0 / (1.0 + (-current.array()).exp())).matrix();
        break;
      case LayerKind::Dropout: {
        if (mode == Mode::Eval || spec.dropout_rate == 0.0) {
          next = current;
          break;
        }
        const double keep = 1.0 - spec.dropout_rate;
        Eigen::MatrixXd mask(current.rows(), current.cols());
        double* m = mask.data();
        const Eigen::Index count = mask.size();
        for (Eigen::Index i = 0; i < count; ++i) {
          m[i] = dropout_rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
        next = current.cwiseProduct(mask);
        if (trace) trace->dropout_masks[l] = std::move(mask);
        break;
      }
      case LayerKind::BatchNorm1d: {
        const Eigen::Map<const Eigen::VectorXd> gamma(p, in);
        const Eigen::Map<const Eigen::VectorXd> beta(p + in, in);
        Eigen::VectorXd mean(in), var(in);
        if (mode == Mode::Train) {
          // Statistics over every step of every sequence in the batch.
          mean = current.colwise().mean();
          var = (current.rowwise() - mean.transpose()).array().square().colwise().sum() /
                n_rows;
        } else {
          mean = running_stats_[bn_index_[l]].first;
          var = running_stats_[bn_index_[l]].second;
        }
        const Eigen::ArrayXd scale = gamma.array() / (var.array() + bn_eps_).sqrt();
        next = ((current.rowwise() - mean.transpose()).array().rowwise() *
                scale.transpose())
                   .rowwise() +
               beta.transpose().array();
        if (trace && mode == Mode::Train) {
          trace->bn_mean[bn_index_[l]] = mean;
          trace->bn_var[bn_index_[l]] = var;
        }
        break;
      }
    }
    if (trace) {
      trace->activations.push_back(std::move(current));
    }
    current = std::move(next);
  }
  if (trace) trace->activations.push_back(current);
  return current;
}

void Network::update_running_stats(const Trace& trace) {
  for (size_t i = 0; i < running_stats_.size(); ++i) {
    if (trace.bn_mean[i].size() == 0) continue;
    running_stats_[i].first =
        (1.0 - bn_momentum_) * running_stats_[i].first + bn_momentum_ * trace.bn_mean[i];
    running_stats_[i].second =
        (1.0 - bn_momentum_) * running_stats_[i].second + bn_momentum_ * trace.bn_var[i];
  }
}

Eigen::VectorXd Network::backward_stacked(const Trace& trace, Eigen::MatrixXd delta) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  const double n_rows = static_cast<double>(delta.rows());

  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const auto& spec = layers_[l];
    const int in = layer_widths_[l];
    const double* p = params_.data() + param_offsets_[l];
    double* g = grad.data() + param_offsets_[l];
    const Eigen::MatrixXd& x = trace.activations[l];
    const Eigen::MatrixXd& y = trace.activations[l + 1];
    Eigen::MatrixXd dprev;

    switch (spec.kind) {
      case LayerKind::Dense: {
        const Eigen::Map<const RowMajorMatrix> W(p, spec.width, in);
        Eigen::Map<RowMajorMatrix> dW(g, spec.width, in);
        Eigen::Map<Eigen::VectorXd> db(g + spec.width * in, spec.width);
        dW.noalias() = delta.transpose() * x;
        db.noalias() = delta.colwise().sum().transpose();
        dprev.noalias() = delta * W;
        break;
      }
      case LayerKind::Conv1d: {
        const int K = spec.kernel_size;
        const int pad = (K - 1) / 2;
        const ConstConvWeightMap W(p, spec.width, K * in);
        ConvWeightMap dW(g, spec.width, K * in);
        Eigen::Map<Eigen::VectorXd> db(g + spec.width * in * K, spec.width);
        const Eigen::MatrixXd& unrolled = trace.conv_unrolled[l];
        dW.noalias() = delta.transpose() * unrolled;
        db.noalias() = delta.colwise().sum().transpose();
        Eigen::MatrixXd dunrolled;
        dunrolled.noalias() = delta * W;  // rows x K*C_in
        dprev = Eigen::MatrixXd::Zero(x.rows(), in);
        const int T = trace.T;
        const int B = static_cast<int>(x.rows()) / T;
        for (int k = 0; k < K; ++k) {
          const int shift = k - pad;
          const int t0 = std::max(0, -shift);
          const int t1 = std::min(T, T - shift);
          if (t1 <= t0) continue;
          for (int s = 0; s < B; ++s) {
            dprev.middleRows(s * T + t0 + shift, t1 - t0) +=
                dunrolled.block(s * T + t0, k * in, t1 - t0, in);
          }
        }
        break;
      }
      case LayerKind::Relu:
        dprev = (x.array() > 0.0).select(delta, 0.0);
        break;
      case LayerKind::Sigmoid:
        dprev = delta.cwiseProduct((y.array() * (1.0 - y.array())).matrix());
        break;
      case LayerKind::Dropout:
        if (trace.dropout_masks[l].size() == 0) {
          dprev = std::move(delta);
        } else {
          dprev = delta.cwiseProduct(trace.dropout_masks[l]);
        }
        break;
      case LayerKind::BatchNorm1d: {
        const Eigen::Map<const Eigen::VectorXd> gamma(p, in);
        Eigen::Map<Eigen::VectorXd> dgamma(g, in);
        Eigen::Map<Eigen::VectorXd> dbeta(g + in, in);
        Eigen::VectorXd mean, var;
        if (trace.mode == Mode::Train) {
          mean = trace.bn_mean[bn_index_[l]];
          var = trace.bn_var[bn_index_[l]];
        } else {
          mean = running_stats_[bn_index_[l]].first;
          var = running_stats_[bn_index_[l]].second;
        }
        const Eigen::ArrayXd inv_std = (var.array() + bn_eps_).sqrt().inverse();
        const Eigen::MatrixXd xhat =
            (x.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose();
        const Eigen::MatrixXd dxhat =
            delta.array().rowwise() * gamma.transpose().array();
        dgamma = delta.cwiseProduct(xhat).colwise().sum().transpose();
        dbeta = delta.colwise().sum().transpose();
        if (trace.mode == Mode::Train) {
          const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
          const Eigen::RowVectorXd sum_dxhat_xhat =
              dxhat.cwiseProduct(xhat).colwise().sum();
          Eigen::MatrixXd term = dxhat;
          term.rowwise() -= sum_dxhat / n_rows;
          term -= (xhat.array().rowwise() * (sum_dxhat_xhat / n_rows).array()).matrix();
          dprev = term.array().rowwise() * inv_std.transpose();
        } else {
          // Frozen statistics: the map is affine per channel.
          dprev = dxhat.array().rowwise() * inv_std.transpose();
        }
        break;
      }
    }
    delta = std::move(dprev);
  }
  return grad;
}

namespace {

Eigen::MatrixXd stack_batch(const SeqBatch& inputs, int* T_out) {
  if (inputs.empty()) throw InputError("Network: empty batch");
  const int T = static_cast<int>(inputs.front().rows());
  const int C = static_cast<int>(inputs.front().cols());
  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(T) * inputs.size(), C);
  for (size_t s = 0; s < inputs.size(); ++s) {
    if (inputs[s].rows() != T || inputs[s].cols() != C) {
      throw InputError("Network: batch sequences must share shape");
    }
    stacked.middleRows(static_cast<Eigen::Index>(s) * T, T) = inputs[s];
  }
  *T_out = T;
  return stacked;
}

SeqBatch unstack_batch(const Eigen::MatrixXd& stacked, int T) {
  const int B = static_cast<int>(stacked.rows()) / T;
  SeqBatch out(B);
  for (int s = 0; s < B; ++s) out[s] = stacked.middleRows(static_cast<Eigen::Index>(s) * T, T);
  return out;
}

}  // namespace

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& input) const {
  return run_stacked(input, static_cast<int>(input.rows()), Mode::Eval, 0, nullptr);
}

SeqBatch Network::forward_batch(const SeqBatch& inputs, Mode mode, std::uint64_t dropout_seed) {
  int T = 0;
  Eigen::MatrixXd stacked = stack_batch(inputs, &T);
  if (mode == Mode::Train) {
    Trace trace;
    Eigen::MatrixXd out = run_stacked(std::move(stacked), T, mode, dropout_seed, &trace);
    update_running_stats(trace);
    return unstack_batch(out, T);
  }
  return unstack_batch(run_stacked(std::move(stacked), T, mode, dropout_seed, nullptr), T);
}

double Network::loss_and_gradient(const SeqBatch& inputs, const SequenceLoss& loss, Mode mode,
                                  std::uint64_t dropout_seed, Eigen::VectorXd* grad) {
  int T = 0;
  Eigen::MatrixXd stacked = stack_batch(inputs, &T);
  Trace trace;
  const Eigen::MatrixXd logits = run_stacked(std::move(stacked), T, mode, dropout_seed, &trace);
  if (mode == Mode::Train) update_running_stats(trace);
  LossResult lr = loss(unstack_batch(logits, T));
  if (!grad) return lr.value;

  Eigen::MatrixXd delta(logits.rows(), logits.cols());
  for (size_t s = 0; s < lr.dlogits.size(); ++s) {
    delta.middleRows(static_cast<Eigen::Index>(s) * T, T) = lr.dlogits[s];
  }
  *grad = backward_stacked(trace, std::move(delta));
  return lr.value;
}

void adam_step(Network& net, const Eigen::VectorXd& gradient, double step_size,
               AdamState& state) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  if (gradient.size() != net.parameters().size()) {
    throw InputError("adam_step: gradient size mismatch");
  }
  if (state.m.size() != gradient.size()) {
    state.m = Eigen::VectorXd::Zero(gradient.size());
    state.v = Eigen::VectorXd::Zero(gradient.size());
    state.step = 0;
  }
  state.step += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * gradient;
  state.v = beta2 * state.v + (1.0 - beta2) * gradient.cwiseProduct(gradient);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  const Eigen::ArrayXd m_hat = state.m.array() / bc1;
  const Eigen::ArrayXd v_hat = state.v.array() / bc2;
  Eigen::VectorXd p = net.parameters();
  p.array() -= step_size * m_hat / (v_hat.sqrt() + eps);
  net.set_parameters(p);
}

}  // namespace vigor::nn
