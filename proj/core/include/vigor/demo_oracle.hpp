#pragma once

#include <string>
#include <vector>

#include "vigor/reacher.hpp"

namespace vigor {

/// Generation failed (target out of reach or the success filter starved).
class DemoOracleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct DemoOracleConfig {
  double via_fraction_min = 0.3;
  double via_fraction_max = 0.7;
  int ik_restarts = 8;
  double noise_sigma = 0.02;  // ProMP-weight perturbation, re-filtered
  double min_yield = 0.1;
  int workers = 1;
};

/// Synthetic expert demonstrations with distinct solution modes per
/// context. Each demo visits the first target and parks inside the second;
/// the mode seed selects the inverse-kinematics branch and via timing.
Trajectory generate_demo(const ReacherContext& context, const ReacherTask& task,
                         std::uint64_t mode_seed, std::uint64_t rng_seed,
                         const DemoOracleConfig& cfg = {});

struct DemoSet {
  std::vector<ReacherContext> contexts;
  std::vector<std::vector<ProMPWeights>> demos;  // aligned with contexts
  std::uint64_t seed = 0;
  int total_attempts = 0;  // generation attempts across contexts

  int total() const {
    int n = 0;
    for (const auto& d : demos) n += static_cast<int>(d.size());
    return n;
  }
  double filter_yield() const {
    return total_attempts > 0 ? static_cast<double>(total()) / total_attempts : 0.0;
  }
};

/// Generates, ProMP-fits and success-filters demos until each context has
/// per_context survivors. Throws DemoOracleError if the filter yield drops
/// below cfg.min_yield.
DemoSet build_demo_set(const std::vector<ReacherContext>& contexts, int per_context,
                       const ReacherTask& task, const DemoOracleConfig& cfg,
                       std::uint64_t seed);

/// Runs raw joint trajectories through the same fit + success filter,
/// dropping failures. Supports imported recorded demonstrations.
DemoSet import_demo_set(const std::vector<ReacherContext>& contexts,
                        const std::vector<std::vector<Trajectory>>& raw,
                        const ReacherTask& task);

/// Mean over time of the mean absolute per-joint difference between two
/// equally shaped trajectories; the versatility measure.
double mean_joint_distance(const Trajectory& a, const Trajectory& b);

}  // namespace vigor
