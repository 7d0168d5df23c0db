#include "vigor/gmm.hpp"

#include <cmath>

namespace vigor {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

GaussianComponent::GaussianComponent(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  const int d = static_cast<int>(mean_.size());
  if (covariance_.rows() != d || covariance_.cols() != d) {
    throw InputError("GaussianComponent: covariance shape does not match mean");
  }
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw NumericalError("GaussianComponent: covariance not symmetric");
  }
  covariance_ = 0.5 * (covariance_ + covariance_.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("GaussianComponent: covariance not positive definite");
  }
  chol_lower_ = llt.matrixL();
  log_det_cov_ = 2.0 * chol_lower_.diagonal().array().log().sum();
}

double GaussianComponent::log_density(const Eigen::VectorXd& w) const {
  if (w.size() != mean_.size()) {
    throw InputError("GaussianComponent::log_density: dimension mismatch");
  }
  const Eigen::VectorXd z =
      chol_lower_.triangularView<Eigen::Lower>().solve(w - mean_);
  return -0.5 * (dim() * kLog2Pi + log_det_cov_ + z.squaredNorm());
}

Eigen::VectorXd GaussianComponent::sample(Rng& rng) const {
  return mean_ + chol_lower_ * rng.normal_vector(dim());
}

void MixturePolicy::validate() const {
  if (components.empty()) throw InputError("MixturePolicy: no components");
  if (log_weights.size() != static_cast<Eigen::Index>(components.size())) {
    throw InputError("MixturePolicy: log_weights size mismatch");
  }
  if (std::abs(logsumexp(log_weights)) > 1e-12) {
    throw InputError("MixturePolicy: mixture weights do not normalize");
  }
  const int d = components.front().dim();
  for (const auto& c : components) {
    if (c.dim() != d) throw InputError("MixturePolicy: components disagree on dimension");
  }
}

MixturePolicy MixturePolicy::initial(const std::string& context_id, int dim, int n_components,
                                     double sigma_init, std::uint64_t seed) {
  if (n_components < 1) throw ConfigError("MixturePolicy::initial: need at least one component");
  if (!(sigma_init > 0.0)) throw ConfigError("MixturePolicy::initial: sigma_init must be positive");
  MixturePolicy policy;
  policy.context_id = context_id;
  Rng rng(seed);
  const Eigen::MatrixXd cov =
      sigma_init * sigma_init * Eigen::MatrixXd::Identity(dim, dim);
  for (int z = 0; z < n_components; ++z) {
    policy.components.emplace_back(sigma_init * rng.normal_vector(dim), cov);
  }
  policy.log_weights =
      Eigen::VectorXd::Constant(n_components, -std::log(static_cast<double>(n_components)));
  return policy;
}

std::vector<WeightSample> sample(const MixturePolicy& policy, int n, std::uint64_t rng_seed) {
  if (n < 1) throw InputError("sample: n must be >= 1");
  policy.validate();
  Rng rng(rng_seed);
  const Eigen::VectorXd probs = policy.log_weights.array().exp();
  std::vector<WeightSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int z = rng.categorical(probs);
    out.push_back({policy.components[z].sample(rng), z});
  }
  return out;
}

double log_density(const MixturePolicy& policy, const Eigen::VectorXd& w) {
  if (policy.components.empty()) throw InputError("log_density: empty policy");
  if (w.size() != policy.components.front().mean().size()) {
    throw InputError("log_density: dimension mismatch");
  }
  Eigen::VectorXd terms(policy.size());
  for (int z = 0; z < policy.size(); ++z) {
    terms[z] = policy.log_weights[z] + policy.components[z].log_density(w);
  }
  return logsumexp(terms);
}

double kl_gaussian(const GaussianComponent& a, const GaussianComponent& b) {
  if (a.dim() != b.dim()) throw InputError("kl_gaussian: dimension mismatch");
  const int d = a.dim();
  // 0.5 * (tr(Sb^-1 Sa) + (mb-ma)^T Sb^-1 (mb-ma) - d + log det Sb - log det Sa)
  const Eigen::MatrixXd& lb = b.chol_lower();
  const Eigen::MatrixXd m = lb.triangularView<Eigen::Lower>().solve(a.chol_lower());
  const double trace_term = m.squaredNorm();
  const Eigen::VectorXd dz =
      lb.triangularView<Eigen::Lower>().solve(b.mean() - a.mean());
  const double log_det_a = 2.0 * a.chol_lower().diagonal().array().log().sum();
  const double log_det_b = 2.0 * lb.diagonal().array().log().sum();
  return 0.5 * (trace_term + dz.squaredNorm() - d + log_det_b - log_det_a);
}

}  // namespace vigor
