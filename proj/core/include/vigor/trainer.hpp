#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vigor/demo_oracle.hpp"
#include "vigor/discriminator.hpp"
#include "vigor/trust_region.hpp"

namespace vigor {

struct IterationMetrics {
  int iteration = 0;
  double train_distance = 0.0;  // mean over train contexts, best component
  double test_distance = 0.0;
  double train_success = 0.0;
  double test_success = 0.0;
  double mean_abs_ratio = 0.0;  // |log ratio| on fresh policy samples
  // Best-component values per context, trainer context order (train, test).
  std::vector<double> context_d1;
  std::vector<double> context_d2;
  std::vector<double> context_success;
};

struct TrainState {
  std::map<std::string, MixturePolicy> policies;  // train + test contexts
  std::optional<RatioEstimator> estimator;
  int iteration = 0;
  std::vector<IterationMetrics> history;
};

struct TrainerConfig {
  int n_components = 5;
  double sigma_init = 1.0;
  TrustRegionConfig trust_region;
  DiscriminatorConfig discriminator;
  int max_iterations = 500;
  double convergence_tol = 1e-3;
  int convergence_window = 10;
  int metric_samples = 8;  // per component, for the iteration metric
  int retries = 2;
  int workers = 1;
  std::uint64_t seed = 0;
};

/// Per-context log-ratio closures for one iteration. Implementations must
/// leave the returned closures safe for concurrent evaluation.
using RatioProvider = std::function<std::map<std::string, RatioFn>(TrainState& state,
                                                                   std::uint64_t iter_seed)>;

/// Orchestrates the outer loop: refresh the ratio estimate, then update
/// every component of every context's policy under the KL trust region.
class Trainer {
 public:
  Trainer(DemoSet demos, std::vector<ReacherContext> test_contexts, ReacherTask task,
          TrainerConfig cfg);

  const TrainerConfig& config() const { return cfg_; }
  const ReacherTask& task() const { return task_; }
  const DemoSet& demos() const { return demos_; }
  const std::vector<ReacherContext>& contexts() const { return all_contexts_; }
  const std::vector<ReacherContext>& train_contexts() const { return train_contexts_; }
  const std::vector<ReacherContext>& test_contexts() const { return test_contexts_; }

  TrainState initial_state() const;

  /// One outer iteration with the discriminator retrained from scratch.
  /// `attempt` salts the seed so a retried iteration resamples.
  TrainState vigor_iteration(const TrainState& state, int attempt = 0) const;

  /// One outer iteration against externally supplied ratio closures.
  TrainState iteration_with_ratios(const TrainState& state, const RatioProvider& provider,
                                   int attempt = 0) const;

  /// Runs until convergence or cfg.max_iterations. The callback fires after
  /// every iteration (checkpointing, metric streaming).
  TrainState train(
      const std::function<void(const TrainState&, const IterationMetrics&)>& on_iteration =
          {}) const;
  TrainState train(
      TrainState state,
      const std::function<void(const TrainState&, const IterationMetrics&)>& on_iteration =
          {}) const;

  IterationMetrics compute_metrics(const TrainState& state, int iteration) const;

  /// Expert descriptor pool (train contexts only), computed once.
  const std::vector<DescriptorSequence>& expert_descriptors() const {
    return expert_descriptors_;
  }

  /// Trains the discriminator for the given state and returns it together
  /// with per-context ratio closures; the default RatioProvider.
  RatioEstimator train_discriminator(const TrainState& state, std::uint64_t iter_seed) const;

 private:
  std::map<std::string, RatioFn> discriminator_ratios(TrainState& state,
                                                      std::uint64_t iter_seed) const;
  const ReacherContext& context_by_id(const std::string& id) const;
  bool converged(const std::vector<IterationMetrics>& history) const;

  DemoSet demos_;
  std::vector<ReacherContext> train_contexts_;
  std::vector<ReacherContext> test_contexts_;
  std::vector<ReacherContext> all_contexts_;
  ReacherTask task_;
  TrainerConfig cfg_;
  std::vector<DescriptorSequence> expert_descriptors_;
};

}  // namespace vigor
