#include "vigor/reacher.hpp"

#include <cmath>

namespace vigor {

std::vector<Eigen::Vector2d> forward_kinematics(const Eigen::VectorXd& joints) {
  if (!joints.allFinite()) throw InputError("forward_kinematics: non-finite joint angles");
  std::vector<Eigen::Vector2d> points;
  points.reserve(joints.size() + 1);
  points.emplace_back(0.0, 0.0);
  double angle = 0.0;
  for (Eigen::Index i = 0; i < joints.size(); ++i) {
    angle += joints[i];
    points.push_back(points.back() + Eigen::Vector2d(std::cos(angle), std::sin(angle)));
  }
  return points;
}

Eigen::Vector2d end_effector(const Eigen::VectorXd& joints) {
  return forward_kinematics(joints).back();
}

Eigen::MatrixXd end_effector_path(const Trajectory& trajectory) {
  Eigen::MatrixXd path(trajectory.steps(), 2);
  for (int t = 0; t < trajectory.steps(); ++t) {
    path.row(t) = end_effector(trajectory.values.row(t).transpose()).transpose();
  }
  return path;
}

ReacherContext sample_context(std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  ReacherContext c;
  c.target1 = Eigen::Vector2d(0.5 + 0.5 * rng.normal(), 2.5 + 0.5 * rng.normal());
  c.target2 = Eigen::Vector2d(0.5 + 0.5 * rng.normal(), -2.5 + 0.5 * rng.normal());
  c.radius = 0.5;
  return c;
}

ContextSet sample_context_set(int n_train, int n_test, std::uint64_t rng_seed) {
  if (n_train < 1 || n_test < 0) throw ConfigError("sample_context_set: bad counts");
  ContextSet set;
  for (int i = 0; i < n_train; ++i) {
    ReacherContext c = sample_context(derive_seed(rng_seed, 0x7a41, i));
    c.id = "train_" + std::to_string(i);
    set.train.push_back(c);
  }
  for (int i = 0; i < n_test; ++i) {
    ReacherContext c = sample_context(derive_seed(rng_seed, 0x7e57, i));
    c.id = "test_" + std::to_string(i);
    set.test.push_back(c);
  }
  return set;
}

namespace {

// Clamped first/second differences: the first frame is repeated backwards,
// so a stationary trajectory yields exactly zero velocity and acceleration.
Eigen::VectorXd mean_abs_diff(const Eigen::MatrixXd& values, int order) {
  const int T = static_cast<int>(values.rows());
  Eigen::VectorXd out(T);
  auto row = [&](int t) { return values.row(std::max(t, 0)); };
  for (int t = 0; t < T; ++t) {
    Eigen::RowVectorXd diff;
    if (order == 1) {
      diff = row(t) - row(t - 1);
    } else {
      diff = row(t) - 2.0 * row(t - 1) + row(t - 2);
    }
    out[t] = diff.cwiseAbs().mean();
  }
  return out;
}

}  // namespace

DescriptorSequence descriptors(const ProMPWeights& weights, const ReacherContext& context,
                               const ReacherTask& task) {
  const Trajectory traj = decode(weights, task.trajectory_steps, task.basis);
  const Eigen::MatrixXd ee = end_effector_path(traj);
  const int T = traj.steps();

  DescriptorSequence seq;
  seq.context_id = context.id;
  switch (task.descriptors.set) {
    case DescriptorSet::Geometric: {
      seq.values.resize(T, 4);
      seq.values.col(0) = (ee.rowwise() - context.target1.transpose()).rowwise().norm();
      seq.values.col(1) = (ee.rowwise() - context.target2.transpose()).rowwise().norm();
      seq.values.col(2) = mean_abs_diff(traj.values, 1);
      seq.values.col(3) = mean_abs_diff(traj.values, 2);
      break;
    }
    case DescriptorSet::Angles: {
      // Raw joint angles concatenated with the context coordinates.
      seq.values.resize(T, traj.action_dim() + 4);
      seq.values.leftCols(traj.action_dim()) = traj.values;
      for (int t = 0; t < T; ++t) {
        seq.values(t, traj.action_dim() + 0) = context.target1.x();
        seq.values(t, traj.action_dim() + 1) = context.target1.y();
        seq.values(t, traj.action_dim() + 2) = context.target2.x();
        seq.values(t, traj.action_dim() + 3) = context.target2.y();
      }
      break;
    }
    case DescriptorSet::Jointwise: {
      // Target distances plus per-joint absolute velocity and acceleration.
      const int dofs = traj.action_dim();
      seq.values.resize(T, 2 + 2 * dofs);
      seq.values.col(0) = (ee.rowwise() - context.target1.transpose()).rowwise().norm();
      seq.values.col(1) = (ee.rowwise() - context.target2.transpose()).rowwise().norm();
      auto row = [&](int t) { return traj.values.row(std::max(t, 0)); };
      for (int t = 0; t < T; ++t) {
        seq.values.block(t, 2, 1, dofs) = (row(t) - row(t - 1)).cwiseAbs();
        seq.values.block(t, 2 + dofs, 1, dofs) =
            (row(t) - 2.0 * row(t - 1) + row(t - 2)).cwiseAbs();
      }
      break;
    }
  }
  return seq;
}

std::pair<double, double> distance_to_boundaries(const Trajectory& trajectory,
                                                 const ReacherContext& context) {
  const Eigen::MatrixXd ee = end_effector_path(trajectory);
  const double min_d1 =
      (ee.rowwise() - context.target1.transpose()).rowwise().norm().minCoeff();
  const double final_d2 =
      (ee.row(ee.rows() - 1).transpose() - context.target2).norm();
  return {std::max(0.0, min_d1 - context.radius),
          std::max(0.0, final_d2 - context.radius)};
}

std::pair<double, double> distance_to_boundaries(const ProMPWeights& weights,
                                                 const ReacherContext& context,
                                                 const ReacherTask& task) {
  return distance_to_boundaries(decode(weights, task.trajectory_steps, task.basis), context);
}

}  // namespace vigor
