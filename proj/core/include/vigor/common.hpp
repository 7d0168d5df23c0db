#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace vigor {

/// Invalid configuration values (bad layer spec, nonpositive bandwidth, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed runtime inputs (dimension mismatches, missing files, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failures: singular systems, factorizations that do not converge.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No feasible dual variable keeps the updated precision positive definite.
class TrustRegionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives independent stream seeds from a base seed and a tag path, so that
/// per-context/per-component work is reproducible regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return splitmix64(base ^ splitmix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
  return derive_seed(derive_seed(base, a, b), c);
}

/// Deterministic random stream. Distributions are implemented on top of the
/// raw mt19937_64 output so that results are identical across standard
/// library implementations (std::normal_distribution is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; one cached value.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// Index in [0, n) with probability proportional to weights.
  int categorical(const Eigen::VectorXd& weights) {
    const double total = weights.sum();
    double u = uniform() * total;
    for (int i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return static_cast<int>(weights.size()) - 1;
  }

  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(uniform() * n) % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Work item i must
/// not depend on scheduling; callers derive per-item seeds for that.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::max(1, std::min({workers, n}));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline double logsumexp(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace vigor
