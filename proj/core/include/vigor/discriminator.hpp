#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vigor/nn.hpp"

namespace vigor {

enum class SequenceSource { Expert, Policy };

/// Per-step behavioral descriptors of one trajectory in one context.
struct DescriptorSequence {
  Eigen::MatrixXd values;  // steps x features
  std::string context_id;
  SequenceSource source = SequenceSource::Policy;

  int steps() const { return static_cast<int>(values.rows()); }
  int features() const { return static_cast<int>(values.cols()); }
};

/// Binary cross-entropy on the summed sequence logit: sigma(sum_t y_t)
/// targets 1 for policy sequences and 0 for expert sequences. Logit sums
/// are clamped to +-30.
double bce_full(const nn::SeqBatch& logits, const std::vector<int>& labels);
nn::LossResult bce_full_with_grad(const nn::SeqBatch& logits, const std::vector<int>& labels);

/// Per-step binary cross-entropy summed over time, averaged over the batch.
double bce_stepwise(const nn::SeqBatch& logits, const std::vector<int>& labels);
nn::LossResult bce_stepwise_with_grad(const nn::SeqBatch& logits,
                                      const std::vector<int>& labels);

enum class DiscriminatorLoss { Stepwise, Full };

struct DiscriminatorConfig {
  int ensemble_size = 5;
  int conv_layers = 2;
  int channels = 32;
  int kernel_size = 5;
  double dropout_rate = 0.2;
  bool batchnorm = false;
  DiscriminatorLoss loss = DiscriminatorLoss::Stepwise;
  int batch_size = 64;
  double learning_rate = 3e-4;
  double validation_split = 0.1;
  int patience = 20;
  int max_epochs = 500;
  int min_sequences_for_early_stop = 10;
  int workers = 1;  // ensemble members train independently

  std::vector<nn::LayerSpec> build_layers() const;
};

enum class TrainQuality { Ok, Degraded };

/// Ensemble of sequence classifiers whose mean summed logit estimates the
/// log density ratio log q/p (positive where the policy out-weighs the
/// expert). Inputs are z-normalized with statistics frozen at training time.
struct RatioEstimator {
  std::vector<nn::Network> ensemble;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  TrainQuality quality = TrainQuality::Ok;

  Eigen::MatrixXd normalize(const Eigen::MatrixXd& values) const;
};

/// Trains a fresh ensemble on expert (label 0) vs policy (label 1)
/// descriptor sequences with early stopping on a held-out split. Requires
/// equally sized classes.
RatioEstimator train_ratio_estimator(const std::vector<DescriptorSequence>& expert,
                                     const std::vector<DescriptorSequence>& policy,
                                     const DiscriminatorConfig& cfg, std::uint64_t seed);

/// Mean over ensemble members of the summed per-step logits.
double log_ratio(const RatioEstimator& est, const DescriptorSequence& sequence);

}  // namespace vigor
