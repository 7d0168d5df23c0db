#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vigor/discriminator.hpp"
#include "vigor/promp.hpp"

namespace vigor {

/// One task configuration: an intermediate and a final planar target.
struct ReacherContext {
  Eigen::Vector2d target1;  // intermediate
  Eigen::Vector2d target2;  // final
  double radius = 0.5;
  std::string id;
};

enum class DescriptorSet { Geometric, Angles, Jointwise };

struct DescriptorConfig {
  DescriptorSet set = DescriptorSet::Geometric;
};

struct ReacherTask {
  int trajectory_steps = 30;
  int dofs = 5;
  BasisConfig basis;  // 5 normalized RBFs by default
  DescriptorConfig descriptors;

  int weight_dim() const { return basis.n_basis * dofs; }
};

/// Joint tip positions for a planar chain of unit links; entry 0 is the
/// base at the origin, entry dofs is the end-effector.
std::vector<Eigen::Vector2d> forward_kinematics(const Eigen::VectorXd& joints);

Eigen::Vector2d end_effector(const Eigen::VectorXd& joints);

/// End-effector positions for every step of a trajectory, steps x 2.
Eigen::MatrixXd end_effector_path(const Trajectory& trajectory);

/// Targets drawn from isotropic Gaussians centered at (0.5, 2.5) and
/// (0.5, -2.5) with standard deviation 0.5; radius fixed at 0.5.
ReacherContext sample_context(std::uint64_t rng_seed);

struct ContextSet {
  std::vector<ReacherContext> train;
  std::vector<ReacherContext> test;
};

/// Draws train and test contexts from disjoint stream positions of one seed.
ContextSet sample_context_set(int n_train, int n_test, std::uint64_t rng_seed);

/// Per-step geometric descriptors of a decoded weight vector: distances of
/// the end-effector to both targets plus mean absolute joint velocity and
/// acceleration (clamped differences at the sequence start).
DescriptorSequence descriptors(const ProMPWeights& weights, const ReacherContext& context,
                               const ReacherTask& task);

/// First value: min over steps of the end-effector distance to target1's
/// boundary. Second: the final step's distance to target2's boundary. Both
/// clamped at zero; success means both are zero.
std::pair<double, double> distance_to_boundaries(const ProMPWeights& weights,
                                                 const ReacherContext& context,
                                                 const ReacherTask& task);

std::pair<double, double> distance_to_boundaries(const Trajectory& trajectory,
                                                 const ReacherContext& context);

inline bool is_success(const std::pair<double, double>& d) {
  return d.first == 0.0 && d.second == 0.0;
}

}  // namespace vigor
