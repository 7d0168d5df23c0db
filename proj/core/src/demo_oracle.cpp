#include "vigor/demo_oracle.hpp"

#include <cmath>
#include <mutex>

namespace vigor {

namespace {

Eigen::MatrixXd planar_jacobian(const Eigen::VectorXd& joints) {
  const int n = static_cast<int>(joints.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2, n);
  double angle = 0.0;
  std::vector<double> cum(n);
  for (int i = 0; i < n; ++i) {
    angle += joints[i];
    cum[i] = angle;
  }
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) {
      jac(0, j) -= std::sin(cum[i]);
      jac(1, j) += std::cos(cum[i]);
    }
  }
  return jac;
}

// Levenberg-Marquardt on the end-effector error; the starting point selects
// the solution branch of the redundant chain.
Eigen::VectorXd solve_ik(const Eigen::Vector2d& target, const Eigen::VectorXd& start,
                         double* residual) {
  Eigen::VectorXd joints = start;
  double lambda = 1e-2;
  double err = (end_effector(joints) - target).norm();
  for (int it = 0; it < 200 && err > 1e-10; ++it) {
    const Eigen::MatrixXd jac = planar_jacobian(joints);
    const Eigen::Vector2d r = end_effector(joints) - target;
    Eigen::MatrixXd h = jac.transpose() * jac;
    h.diagonal().array() += lambda;
    const Eigen::VectorXd step = h.ldlt().solve(jac.transpose() * r);
    const Eigen::VectorXd proposal = joints - step;
    const double new_err = (end_effector(proposal) - target).norm();
    if (new_err < err) {
      joints = proposal;
      err = new_err;
      lambda = std::max(lambda * 0.5, 1e-9);
    } else {
      lambda *= 4.0;
      if (lambda > 1e8) break;
    }
  }
  if (residual) *residual = err;
  return joints;
}

Eigen::VectorXd ik_from_random_branch(const Eigen::Vector2d& target, int dofs, Rng& rng,
                                      int restarts) {
  double best_err = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;
  for (int attempt = 0; attempt < restarts; ++attempt) {
    Eigen::VectorXd start(dofs);
    for (Eigen::Index i = 0; i < start.size(); ++i) start[i] = rng.uniform(-1.6, 1.6);
    double err = 0.0;
    const Eigen::VectorXd sol = solve_ik(target, start, &err);
    if (err < 1e-8) return sol;  // branch picked by the random start
    if (err < best_err) {
      best_err = err;
      best = sol;
    }
  }
  if (best_err > 1e-6) {
    throw DemoOracleError("demo oracle: inverse kinematics did not reach the target");
  }
  return best;
}

double smoothstep(double s) { return s * s * (3.0 - 2.0 * s); }

// Gauss-Newton in weight space: pushes the decoded end-effector through
// target1 at the via step and onto target2 at the final step, so success
// survives the ProMP projection exactly.
ProMPWeights refine_weights(ProMPWeights w, int via_step, const ReacherContext& context,
                            const ReacherTask& task) {
  const int T = task.trajectory_steps;
  const int n_basis = task.basis.n_basis;
  const int dofs = task.dofs;
  const Eigen::VectorXd phi_via =
      rbf_features(static_cast<double>(via_step) / (T - 1), task.basis);
  const Eigen::VectorXd phi_end = rbf_features(1.0, task.basis);

  double lambda = 1e-3;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd theta_via = w.weights.transpose() * phi_via;
    const Eigen::VectorXd theta_end = w.weights.transpose() * phi_end;
    Eigen::Vector4d r;
    r.head<2>() = end_effector(theta_via) - context.target1;
    r.tail<2>() = end_effector(theta_end) - context.target2;
    if (r.norm() < 1e-10) break;

    const Eigen::MatrixXd arm_via = planar_jacobian(theta_via);
    const Eigen::MatrixXd arm_end = planar_jacobian(theta_end);
    Eigen::MatrixXd jac(4, n_basis * dofs);  // flat index = basis * dofs + dim
    for (int b = 0; b < n_basis; ++b) {
      for (int j = 0; j < dofs; ++j) {
        jac.block<2, 1>(0, b * dofs + j) = arm_via.col(j) * phi_via[b];
        jac.block<2, 1>(2, b * dofs + j) = arm_end.col(j) * phi_end[b];
      }
    }
    Eigen::MatrixXd h = jac * jac.transpose();  // 4x4 dual system
    h.diagonal().array() += lambda;
    const Eigen::VectorXd delta = jac.transpose() * h.ldlt().solve(r);

    Eigen::VectorXd flat = w.flattened() - delta;
    const ProMPWeights proposal = ProMPWeights::from_flat(flat, n_basis, dofs);
    const Eigen::VectorXd new_theta_via = proposal.weights.transpose() * phi_via;
    const Eigen::VectorXd new_theta_end = proposal.weights.transpose() * phi_end;
    Eigen::Vector4d new_r;
    new_r.head<2>() = end_effector(new_theta_via) - context.target1;
    new_r.tail<2>() = end_effector(new_theta_end) - context.target2;
    if (new_r.norm() < r.norm()) {
      w = proposal;
      lambda = std::max(lambda * 0.5, 1e-9);
    } else {
      lambda *= 4.0;
      if (lambda > 1e8) break;
    }
  }
  return w;
}

}  // namespace

Trajectory generate_demo(const ReacherContext& context, const ReacherTask& task,
                         std::uint64_t mode_seed, std::uint64_t rng_seed,
                         const DemoOracleConfig& cfg) {
  if (context.target1.norm() > task.dofs || context.target2.norm() > task.dofs) {
    throw DemoOracleError("demo oracle: target outside the arm's reach");
  }
  const int T = task.trajectory_steps;
  Rng mode_rng(mode_seed);
  const double via_fraction =
      mode_rng.uniform(cfg.via_fraction_min, cfg.via_fraction_max);
  const int via_step = static_cast<int>(std::lround(via_fraction * (T - 1)));

  const Eigen::VectorXd rest = Eigen::VectorXd::Zero(task.dofs);
  const Eigen::VectorXd via =
      ik_from_random_branch(context.target1, task.dofs, mode_rng, cfg.ik_restarts);
  // The end pose continues from the via branch so the arc stays smooth.
  double end_err = 0.0;
  Eigen::VectorXd end = solve_ik(context.target2, via, &end_err);
  if (end_err > 1e-6) {
    end = ik_from_random_branch(context.target2, task.dofs, mode_rng, cfg.ik_restarts);
  }

  // Two smoothstep segments rest -> via -> end; zero velocity at the knots
  // keeps the path C1 and exactly on the waypoints.
  Trajectory traj;
  traj.values.resize(T, task.dofs);
  for (int t = 0; t < T; ++t) {
    if (t <= via_step) {
      const double s = via_step == 0 ? 1.0 : static_cast<double>(t) / via_step;
      traj.values.row(t) = (rest + smoothstep(s) * (via - rest)).transpose();
    } else {
      const double s = static_cast<double>(t - via_step) / (T - 1 - via_step);
      traj.values.row(t) = (via + smoothstep(s) * (end - via)).transpose();
    }
  }

  // Project onto the basis span and pull the projection back onto both
  // targets; small execution noise stays within the target radii.
  ProMPWeights w = refine_weights(fit_promp(traj, task.basis), via_step, context, task);
  Rng noise_rng(rng_seed);
  if (cfg.noise_sigma > 0.0) {
    w.weights += cfg.noise_sigma *
                 Eigen::MatrixXd::NullaryExpr(w.weights.rows(), w.weights.cols(),
                                              [&](Eigen::Index, Eigen::Index) {
                                                return noise_rng.normal();
                                              });
    w = refine_weights(w, via_step, context, task);
  }
  return decode(w, T, task.basis);
}

DemoSet build_demo_set(const std::vector<ReacherContext>& contexts, int per_context,
                       const ReacherTask& task, const DemoOracleConfig& cfg,
                       std::uint64_t seed) {
  if (per_context < 1) throw ConfigError("build_demo_set: per_context must be >= 1");
  if (contexts.empty()) throw InputError("build_demo_set: no contexts");

  DemoSet set;
  set.contexts = contexts;
  set.seed = seed;
  set.demos.resize(contexts.size());

  const int max_attempts = 100 * per_context;
  std::mutex error_mutex;
  std::string first_error;
  std::atomic<int> total_attempts{0};

  parallel_for(static_cast<int>(contexts.size()), cfg.workers, [&](int ci) {
    std::vector<ProMPWeights>& kept = set.demos[ci];
    int attempts = 0;
    while (static_cast<int>(kept.size()) < per_context && attempts < max_attempts) {
      const std::uint64_t attempt_seed = derive_seed(seed, ci, attempts);
      ++attempts;
      try {
        const Trajectory demo =
            generate_demo(contexts[ci], task, derive_seed(attempt_seed, 0xa0de),
                          derive_seed(attempt_seed, 0x0153), cfg);
        ProMPWeights w = fit_promp(demo, task.basis);
        if (is_success(distance_to_boundaries(w, contexts[ci], task))) {
          kept.push_back(std::move(w));
        }
      } catch (const DemoOracleError& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
        return;
      }
    }
    total_attempts += attempts;
    if (static_cast<int>(kept.size()) < per_context &&
        static_cast<double>(kept.size()) < cfg.min_yield * attempts) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (first_error.empty()) {
        first_error = "demo oracle: success-filter yield below threshold for context " +
                      contexts[ci].id;
      }
    }
  });
  set.total_attempts = total_attempts.load();
  if (!first_error.empty()) throw DemoOracleError(first_error);
  for (const auto& d : set.demos) {
    if (static_cast<int>(d.size()) < per_context) {
      throw DemoOracleError("demo oracle: could not fill the demo set");
    }
  }
  return set;
}

DemoSet import_demo_set(const std::vector<ReacherContext>& contexts,
                        const std::vector<std::vector<Trajectory>>& raw,
                        const ReacherTask& task) {
  if (contexts.size() != raw.size()) {
    throw InputError("import_demo_set: contexts/trajectories misaligned");
  }
  DemoSet set;
  set.contexts = contexts;
  set.demos.resize(contexts.size());
  for (size_t ci = 0; ci < contexts.size(); ++ci) {
    for (const auto& traj : raw[ci]) {
      ProMPWeights w = fit_promp(traj, task.basis);
      if (is_success(distance_to_boundaries(w, contexts[ci], task))) {
        set.demos[ci].push_back(std::move(w));
      }
    }
  }
  return set;
}

double mean_joint_distance(const Trajectory& a, const Trajectory& b) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
    throw InputError("mean_joint_distance: shape mismatch");
  }
  return (a.values - b.values).cwiseAbs().mean();
}

}  // namespace vigor
