#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "vigor/common.hpp"

namespace vigor::nn {

enum class LayerKind { Dense, Conv1d, Dropout, BatchNorm1d, Relu, Sigmoid };

struct LayerSpec {
  LayerKind kind;
  int width = 0;        // dense: output width; conv1d: output channels
  int kernel_size = 0;  // conv1d only; must be odd (same-length zero padding)
  double dropout_rate = 0.0;

  static LayerSpec dense(int width) { return {LayerKind::Dense, width, 0, 0.0}; }
  static LayerSpec conv1d(int channels, int kernel_size) {
    return {LayerKind::Conv1d, channels, kernel_size, 0.0};
  }
  static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, rate}; }
  static LayerSpec batchnorm1d() { return {LayerKind::BatchNorm1d, 0, 0, 0.0}; }
  static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0.0}; }
  static LayerSpec sigmoid() { return {LayerKind::Sigmoid, 0, 0, 0.0}; }
};

enum class Mode { Train, Eval };

/// A batch of sequences; each entry is steps x channels.
using SeqBatch = std::vector<Eigen::MatrixXd>;

/// Couples the network's per-step outputs with the labels of a batch:
/// returns the scalar loss and dLoss/dOutput per sequence.
struct LossResult {
  double value = 0.0;
  SeqBatch dlogits;
};
using SequenceLoss = std::function<LossResult(const SeqBatch& logits)>;

/// Feed-forward sequence network over a time axis: dense layers act
/// per step, conv1d along time with zero padding so output and input
/// lengths match. Parameters live in one flat vector.
class Network {
 public:
  Network(int input_width, std::vector<LayerSpec> layers, std::uint64_t init_seed);

  int input_width() const { return input_width_; }
  int output_width() const { return output_width_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  int parameter_count() const { return static_cast<int>(params_.size()); }
  const Eigen::VectorXd& parameters() const { return params_; }
  void set_parameters(const Eigen::VectorXd& p);

  /// Running batch-norm statistics, one (mean, var) pair per batchnorm layer.
  const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& running_stats() const {
    return running_stats_;
  }
  void set_running_stats(std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> stats);

  /// Deterministic eval-mode forward of one sequence (steps x input_width).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;

  /// Batched forward; sequences in one batch must share their shape. Train
  /// mode applies dropout, normalizes with batch statistics and updates
  /// running statistics.
  SeqBatch forward_batch(const SeqBatch& inputs, Mode mode, std::uint64_t dropout_seed = 0);

  /// Mean-batch loss and its reverse-mode gradient w.r.t. the parameters.
  double loss_and_gradient(const SeqBatch& inputs, const SequenceLoss& loss, Mode mode,
                           std::uint64_t dropout_seed, Eigen::VectorXd* grad);

 private:
  struct Trace;
  // Batches run stacked as (B*T x C); sequence s occupies rows [sT, (s+1)T).
  Eigen::MatrixXd run_stacked(Eigen::MatrixXd current, int T, Mode mode,
                              std::uint64_t dropout_seed, Trace* trace) const;
  Eigen::VectorXd backward_stacked(const Trace& trace, Eigen::MatrixXd delta) const;
  void update_running_stats(const Trace& trace);

  int input_width_ = 0;
  int output_width_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<int> param_offsets_;   // per layer, into params_
  std::vector<int> layer_widths_;    // width entering each layer
  std::vector<int> bn_index_;        // per layer: batchnorm slot or -1
  Eigen::VectorXd params_;
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> running_stats_;
  double bn_momentum_ = 0.1;
  double bn_eps_ = 1e-5;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

/// Standard Adam update (beta1 0.9, beta2 0.999, eps 1e-8) on the flat
/// parameter vector.
void adam_step(Network& net, const Eigen::VectorXd& gradient, double step_size,
               AdamState& state);

}  // namespace vigor::nn
