#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vigor/common.hpp"

namespace vigor {

/// Full-covariance Gaussian with a cached Cholesky factor. Construction
/// validates symmetry (1e-10) and positive definiteness.
class GaussianComponent {
 public:
  GaussianComponent(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  /// Lower-triangular L with L L^T = covariance.
  const Eigen::MatrixXd& chol_lower() const { return chol_lower_; }
  int dim() const { return static_cast<int>(mean_.size()); }

  double log_density(const Eigen::VectorXd& w) const;
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_lower_;
  double log_det_cov_ = 0.0;
};

/// Per-context mixture over flattened ProMP weights. Mixture weights are
/// stored in log space and must normalize to 1.
struct MixturePolicy {
  std::vector<GaussianComponent> components;
  Eigen::VectorXd log_weights;
  std::string context_id;

  int size() const { return static_cast<int>(components.size()); }
  int dim() const { return components.empty() ? 0 : components.front().dim(); }

  void validate() const;

  /// Uniform-weight mixture with means drawn from N(0, sigma_init^2 I) and
  /// covariances sigma_init^2 I.
  static MixturePolicy initial(const std::string& context_id, int dim, int n_components,
                               double sigma_init, std::uint64_t seed);
};

struct WeightSample {
  Eigen::VectorXd weights;
  int component;
};

/// Draws n samples; the component index is categorical in the mixture
/// weights, the weight vector Gaussian in the indexed component.
std::vector<WeightSample> sample(const MixturePolicy& policy, int n, std::uint64_t rng_seed);

/// Mixture log density via logsumexp over components.
double log_density(const MixturePolicy& policy, const Eigen::VectorXd& w);

/// Closed-form KL(a || b) between Gaussians of equal dimension.
double kl_gaussian(const GaussianComponent& a, const GaussianComponent& b);

}  // namespace vigor
