#include "vigor/promp.hpp"

#include <cmath>

namespace vigor {

void BasisConfig::validate() const {
  if (n_basis < 2) throw ConfigError("BasisConfig: n_basis must be >= 2");
  if (!(bandwidth_factor > 0.0)) throw ConfigError("BasisConfig: bandwidth_factor must be positive");
  if (center_margin < 0.0 || center_margin > 0.5) {
    throw ConfigError("BasisConfig: center_margin must lie in [0, 0.5]");
  }
}

Eigen::VectorXd ProMPWeights::flattened() const {
  Eigen::VectorXd flat(weights.size());
  int k = 0;
  for (int r = 0; r < weights.rows(); ++r) {
    for (int c = 0; c < weights.cols(); ++c) flat[k++] = weights(r, c);
  }
  return flat;
}

ProMPWeights ProMPWeights::from_flat(const Eigen::VectorXd& flat, int n_basis, int action_dim) {
  if (flat.size() != static_cast<Eigen::Index>(n_basis) * action_dim) {
    throw InputError("ProMPWeights: flat length does not match n_basis * action_dim");
  }
  ProMPWeights w;
  w.weights.resize(n_basis, action_dim);
  int k = 0;
  for (int r = 0; r < n_basis; ++r) {
    for (int c = 0; c < action_dim; ++c) w.weights(r, c) = flat[k++];
  }
  return w;
}

Eigen::VectorXd rbf_features(double phase, const BasisConfig& cfg) {
  cfg.validate();
  const double lo = -cfg.center_margin;
  const double hi = 1.0 + cfg.center_margin;
  const double spacing = (hi - lo) / (cfg.n_basis - 1);
  const double bandwidth = cfg.bandwidth_factor * spacing;

  Eigen::VectorXd features(cfg.n_basis);
  for (int i = 0; i < cfg.n_basis; ++i) {
    const double center = lo + i * spacing;
    const double z = (phase - center) / bandwidth;
    features[i] = std::exp(-0.5 * z * z);
  }
  features /= features.sum();
  return features;
}

Eigen::MatrixXd rbf_feature_matrix(int resolution, const BasisConfig& cfg) {
  if (resolution < 2) throw InputError("rbf_feature_matrix: resolution must be >= 2");
  Eigen::MatrixXd phi(resolution, cfg.n_basis);
  for (int t = 0; t < resolution; ++t) {
    phi.row(t) = rbf_features(static_cast<double>(t) / (resolution - 1), cfg).transpose();
  }
  return phi;
}

ProMPWeights fit_promp(const Trajectory& trajectory, const BasisConfig& cfg, double ridge) {
  cfg.validate();
  if (ridge < 0.0) throw ConfigError("fit_promp: ridge must be nonnegative");
  const int T = trajectory.steps();
  if (T < 2) throw InputError("fit_promp: trajectory needs at least 2 steps");
  if (!trajectory.values.allFinite()) throw InputError("fit_promp: trajectory has non-finite entries");
  if (T < cfg.n_basis && ridge == 0.0) {
    throw NumericalError("fit_promp: underdetermined system requires ridge > 0");
  }

  const Eigen::MatrixXd phi = rbf_feature_matrix(T, cfg);
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += ridge;

  if (ridge == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (!lu.isInvertible()) {
      throw NumericalError("fit_promp: singular feature Gram matrix with ridge = 0");
    }
    return ProMPWeights{lu.solve(phi.transpose() * trajectory.values)};
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw NumericalError("fit_promp: factorization of the normal equations failed");
  }
  return ProMPWeights{ldlt.solve(phi.transpose() * trajectory.values)};
}

Trajectory decode(const ProMPWeights& weights, int resolution, const BasisConfig& cfg) {
  if (resolution < 2) throw InputError("decode: resolution must be >= 2");
  const Eigen::MatrixXd phi = rbf_feature_matrix(resolution, cfg);
  return Trajectory{phi * weights.weights};
}

}  // namespace vigor
