#pragma once

#include <Eigen/Dense>

#include "vigor/common.hpp"

namespace vigor {

/// Normalized radial-basis feature configuration. Centers are evenly spaced
/// on [-center_margin, 1 + center_margin]; the bandwidth is
/// bandwidth_factor times the center spacing.
struct BasisConfig {
  int n_basis = 5;
  double bandwidth_factor = 1.0;
  double center_margin = 0.1;

  void validate() const;
};

/// One trajectory as joint angles per time-step, T x action_dim.
struct Trajectory {
  Eigen::MatrixXd values;

  int steps() const { return static_cast<int>(values.rows()); }
  int action_dim() const { return static_cast<int>(values.cols()); }
};

/// Movement-primitive weights, one column per action dimension.
struct ProMPWeights {
  Eigen::MatrixXd weights;  // n_basis x action_dim

  int n_basis() const { return static_cast<int>(weights.rows()); }
  int action_dim() const { return static_cast<int>(weights.cols()); }

  Eigen::VectorXd flattened() const;  // row-major
  static ProMPWeights from_flat(const Eigen::VectorXd& flat, int n_basis, int action_dim);
};

/// Normalized Gaussian RBF features at a phase in [0, 1]. Entries are
/// nonnegative and sum to 1.
Eigen::VectorXd rbf_features(double phase, const BasisConfig& cfg);

/// Feature matrix for `resolution` phases t/(resolution-1), rows are features.
Eigen::MatrixXd rbf_feature_matrix(int resolution, const BasisConfig& cfg);

/// Per-dimension ridge regression of trajectory values onto the basis.
/// Throws NumericalError for a rank-deficient system with ridge == 0.
ProMPWeights fit_promp(const Trajectory& trajectory, const BasisConfig& cfg,
                       double ridge = 1e-9);

/// Evaluates the weights on a phase grid of the requested resolution.
Trajectory decode(const ProMPWeights& weights, int resolution, const BasisConfig& cfg);

}  // namespace vigor
