#include "vigor/trust_region.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace vigor {

namespace {

// Quadratic monomial features [1, w_0..w_{d-1}, w_i w_j (i<=j)].
Eigen::VectorXd quadratic_features(const Eigen::VectorXd& w) {
  const int d = static_cast<int>(w.size());
  Eigen::VectorXd f(quadratic_design_size(d));
  f[0] = 1.0;
  f.segment(1, d) = w;
  int k = 1 + d;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) f[k++] = w[i] * w[j];
  }
  return f;
}

struct NaturalGaussian {
  Eigen::MatrixXd precision;
  Eigen::VectorXd shift;  // precision * mean
};

// q_new(eta) in natural parameters; empty if the precision is not PD.
std::optional<GaussianComponent> solve_for_eta(const NaturalGaussian& old_nat,
                                               const QuadraticSurrogate& surrogate,
                                               double eta) {
  Eigen::MatrixXd precision = old_nat.precision + surrogate.A / eta;
  precision = 0.5 * (precision + precision.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd shift = old_nat.shift + surrogate.a / eta;
  const Eigen::VectorXd mean = llt.solve(shift);
  Eigen::MatrixXd covariance = llt.solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
  covariance = 0.5 * (covariance + covariance.transpose());
  try {
    return GaussianComponent(mean, covariance);
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

}  // namespace

QuadraticSurrogate fit_surrogate(const std::vector<Eigen::VectorXd>& samples,
                                 const std::vector<double>& rewards, double ridge) {
  if (samples.empty()) throw InputError("fit_surrogate: no samples");
  if (samples.size() != rewards.size()) {
    throw InputError("fit_surrogate: samples/rewards size mismatch");
  }
  const int d = static_cast<int>(samples.front().size());
  const int p = quadratic_design_size(d);
  const int n = static_cast<int>(samples.size());
  if (n < p) throw InputError("fit_surrogate: need at least d(d+3)/2 + 1 samples");
  if (ridge < 0.0) throw ConfigError("fit_surrogate: ridge must be nonnegative");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw InputError("fit_surrogate: non-finite reward");
  }

  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) {
    design.row(i) = quadratic_features(samples[i]).transpose();
    target[i] = rewards[i];
  }
  Eigen::MatrixXd gram = design.transpose() * design;
  for (int j = 1; j < p; ++j) gram(j, j) += ridge;  // intercept unpenalized

  Eigen::VectorXd beta;
  if (ridge == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (!lu.isInvertible()) {
      throw NumericalError("fit_surrogate: singular design with ridge = 0");
    }
    beta = lu.solve(design.transpose() * target);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) {
      throw NumericalError("fit_surrogate: normal equations factorization failed");
    }
    beta = ldlt.solve(design.transpose() * target);
  }

  QuadraticSurrogate s;
  s.a0 = beta[0];
  s.a = beta.segment(1, d);
  s.A = Eigen::MatrixXd::Zero(d, d);
  int k = 1 + d;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double coeff = beta[k++];
      if (i == j) {
        s.A(i, i) = -2.0 * coeff;
      } else {
        s.A(i, j) = -coeff;
        s.A(j, i) = -coeff;
      }
    }
  }
  return s;
}

GaussianComponent kl_constrained_update(const GaussianComponent& component,
                                        const QuadraticSurrogate& surrogate,
                                        const TrustRegionConfig& cfg) {
  if (surrogate.dim() != component.dim()) {
    throw InputError("kl_constrained_update: surrogate dimension mismatch");
  }
  if (!(cfg.kl_bound > 0.0)) throw ConfigError("kl_constrained_update: kl_bound must be positive");

  // Flat surrogate: the optimum is the old component itself.
  if (surrogate.A.cwiseAbs().maxCoeff() == 0.0 && surrogate.a.cwiseAbs().maxCoeff() == 0.0) {
    return component;
  }

  NaturalGaussian old_nat;
  const Eigen::MatrixXd identity =
      Eigen::MatrixXd::Identity(component.dim(), component.dim());
  old_nat.precision = component.chol_lower()
                          .triangularView<Eigen::Lower>()
                          .transpose()
                          .solve(component.chol_lower()
                                     .triangularView<Eigen::Lower>()
                                     .solve(identity));
  old_nat.precision = 0.5 * (old_nat.precision + old_nat.precision.transpose());
  old_nat.shift = old_nat.precision * component.mean();

  // The per-component objective keeps the KL to the previous component as a
  // penalty (unit weight) with the trust region enforced on top, so the
  // divisor is 1 + eta with dual variable eta >= 0. KL(q_new || q_old)
  // decreases monotonically in eta; non-PD precisions count as KL = +inf.
  const auto kl_at = [&](double eta) -> std::pair<double, std::optional<GaussianComponent>> {
    auto cand = solve_for_eta(old_nat, surrogate, 1.0 + eta);
    if (!cand) return {std::numeric_limits<double>::infinity(), std::nullopt};
    return {kl_gaussian(*cand, component), std::move(cand)};
  };

  const double eta_lo = cfg.eta_min;
  double eta_hi = cfg.eta_max;
  auto hi = kl_at(eta_hi);
  if (!(hi.first <= cfg.kl_bound)) {
    // Widen the bracket once before giving up.
    eta_hi *= 100.0;
    hi = kl_at(eta_hi);
    if (!(hi.first <= cfg.kl_bound)) {
      throw TrustRegionError("kl_constrained_update: no feasible dual variable");
    }
  }

  auto lo = kl_at(eta_lo);
  if (lo.first <= cfg.kl_bound) {
    // Trust region inactive: the penalized optimum already satisfies it.
    return std::move(*lo.second);
  }

  double log_lo = std::log(eta_lo);
  double log_hi = std::log(eta_hi);
  GaussianComponent best = std::move(*hi.second);
  for (int it = 0; it < 80; ++it) {
    const double eta = std::exp(0.5 * (log_lo + log_hi));
    auto mid = kl_at(eta);
    if (mid.first <= cfg.kl_bound) {
      best = std::move(*mid.second);
      log_hi = std::log(eta);
    } else {
      log_lo = std::log(eta);
    }
  }
  return best;
}

MixturePolicy update_component_from_ratio(const MixturePolicy& policy, int z,
                                          const RatioFn& ratio_fn,
                                          const TrustRegionConfig& cfg,
                                          std::uint64_t rng_seed, UpdateStatus* status) {
  if (z < 0 || z >= policy.size()) throw InputError("update_component_from_ratio: bad component index");
  const GaussianComponent& component = policy.components[z];
  const int d = component.dim();
  const int n = cfg.effective_samples(d);

  Rng rng(rng_seed);
  std::vector<Eigen::VectorXd> samples;
  std::vector<double> rewards;
  samples.reserve(n);
  rewards.reserve(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd w = component.sample(rng);
    const double reward = -ratio_fn(w);
    if (!std::isfinite(reward)) continue;
    samples.push_back(std::move(w));
    rewards.push_back(reward);
  }

  if (static_cast<int>(samples.size()) < quadratic_design_size(d)) {
    if (status) *status = UpdateStatus::SkippedNonFinite;
    return policy;
  }

  const QuadraticSurrogate surrogate = fit_surrogate(samples, rewards, cfg.ridge);
  MixturePolicy updated = policy;
  try {
    updated.components[z] = kl_constrained_update(component, surrogate, cfg);
    if (status) *status = UpdateStatus::Updated;
  } catch (const TrustRegionError&) {
    if (status) *status = UpdateStatus::FallbackInfeasible;
    return policy;
  }
  return updated;
}

}  // namespace vigor
