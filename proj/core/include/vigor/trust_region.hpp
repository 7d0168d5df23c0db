#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "vigor/gmm.hpp"

namespace vigor {

/// Quadratic reward model R(w) = -1/2 w^T A w + w^T a + a0.
struct QuadraticSurrogate {
  Eigen::MatrixXd A;
  Eigen::VectorXd a;
  double a0 = 0.0;

  int dim() const { return static_cast<int>(a.size()); }
  double value(const Eigen::VectorXd& w) const {
    return -0.5 * w.dot(A * w) + w.dot(a) + a0;
  }
};

struct TrustRegionConfig {
  double kl_bound = 0.2;
  int samples_per_component = 0;  // 0: use d(d+3)/2 + 25
  double ridge = 1e-8;
  double eta_min = 1e-6;
  double eta_max = 1e6;

  int effective_samples(int dim) const {
    return samples_per_component > 0 ? samples_per_component
                                     : dim * (dim + 3) / 2 + 25;
  }
};

/// Minimum sample count for a full-rank quadratic fit in dimension d.
inline int quadratic_design_size(int d) { return d * (d + 3) / 2 + 1; }

/// Least-squares fit of rewards over the monomials {1, w_i, w_i w_j (i<=j)}.
/// The intercept is not penalized, so constant reward shifts land in a0
/// exactly. Throws NumericalError if the design is singular with ridge == 0.
QuadraticSurrogate fit_surrogate(const std::vector<Eigen::VectorXd>& samples,
                                 const std::vector<double>& rewards, double ridge);

/// Maximizes E_q[R] - KL(q || q_old) subject to KL(q_new || q_old) <=
/// kl_bound: the KL penalty comes from the variational bound, the hard
/// constraint from the trust region. Closed form in natural parameters with
/// divisor 1 + eta; eta >= 0 is located by bisection in log space on the
/// monotone map eta -> KL(q_new(eta) || q_old). The returned Gaussian always
/// satisfies the bound up to 1e-6. Throws TrustRegionError when no eta in
/// the (once-widened) bracket yields a positive definite precision.
GaussianComponent kl_constrained_update(const GaussianComponent& component,
                                        const QuadraticSurrogate& surrogate,
                                        const TrustRegionConfig& cfg);

enum class UpdateStatus { Updated, SkippedNonFinite, FallbackInfeasible };

using RatioFn = std::function<double(const Eigen::VectorXd&)>;

/// Samples component z, scores rewards as -ratio_fn(w), fits a surrogate and
/// applies the KL-constrained update to that component alone. Non-finite
/// ratios drop the offending samples; if too few remain, the update is
/// skipped.
MixturePolicy update_component_from_ratio(const MixturePolicy& policy, int z,
                                          const RatioFn& ratio_fn,
                                          const TrustRegionConfig& cfg,
                                          std::uint64_t rng_seed,
                                          UpdateStatus* status = nullptr);

}  // namespace vigor
