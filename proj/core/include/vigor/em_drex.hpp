#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vigor/demo_oracle.hpp"
#include "vigor/discriminator.hpp"
#include "vigor/trust_region.hpp"

namespace vigor {

/// EM fit of a full-covariance GMM over weight vectors; diagonal loading
/// keeps the M-step covariances positive definite. Restarts with a fresh
/// seed on responsibility collapse, up to 5 times.
MixturePolicy em_fit(const std::vector<Eigen::VectorXd>& data, int k, std::uint64_t rng_seed,
                     double covariance_reg = 1e-6, int max_iterations = 100);

/// Demonstration GMMs with linearly inflated covariances; the noise level
/// orders samples for preference learning (lower level ranks higher).
struct NoiseLadder {
  double base_noise = 0.3;
  double max_multiplier = 5.0;
  std::vector<double> multipliers;                       // length L, increasing
  std::vector<std::vector<MixturePolicy>> per_context;   // [context][level]
  std::vector<std::string> context_ids;

  int levels() const { return static_cast<int>(multipliers.size()); }
};

NoiseLadder build_noise_ladder(const std::vector<MixturePolicy>& fit_policies,
                               double base_noise, int levels, double max_multiplier);

/// Sequence network scoring descriptor sequences; the summed per-step
/// output is the (unscaled) trajectory reward.
struct RewardNet {
  std::vector<nn::Network> ensemble;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  double scale = 1.0;
};

/// Mean over ensemble members of the summed per-step reward, unscaled.
double reward_value(const RewardNet& net, const Eigen::MatrixXd& descriptor_values);

/// Bradley-Terry preference cross-entropy with target "lower noise wins":
/// -log sigma(sum R_i - sum R_j) for per-step reward sequences i and j.
double drex_ranking_loss(double sum_reward_lower, double sum_reward_higher);

/// Ranking loss over a batch of (lower, higher) logit pairs laid out as
/// [i0, j0, i1, j1, ...]; plugs into nn gradient computation.
double drex_ranking_loss_batch(const nn::SeqBatch& logits);
nn::LossResult drex_ranking_loss_with_grad(const nn::SeqBatch& logits);

struct EmDrexConfig {
  int em_components = 3;
  double base_noise = 0.3;
  int noise_levels = 5;
  double max_noise_multiplier = 5.0;
  int total_em_samples = 8192;  // across contexts and levels
  int pairs_per_context = 64;   // per epoch, resampled
  double reward_scale = 100.0;
  DiscriminatorConfig reward_net;  // architecture and optimizer settings
  TrustRegionConfig trust_region;
  int n_components = 5;
  double sigma_init = 1.0;
  int optimize_iterations = 300;
  double convergence_tol = 1e-3;
  int convergence_window = 10;
  int metric_samples = 8;
  int workers = 1;

  EmDrexConfig() {
    reward_net.channels = 64;
    reward_net.batch_size = 128;
    reward_net.learning_rate = 3e-5;
    reward_net.batchnorm = true;
  }
};

/// Fits per-context GMMs, builds the noise ladder, draws ranked samples and
/// trains the reward ensemble on cross-level preference pairs.
RewardNet train_reward(const DemoSet& demos, const ReacherTask& task,
                       const EmDrexConfig& cfg, std::uint64_t seed);

/// Reward closure per context used by the policy optimizer; the default
/// wraps the trained net, tests may inject an oracle score instead.
using ContextReward = std::function<double(const Eigen::VectorXd& weights)>;
using RewardFactory = std::function<ContextReward(const ReacherContext& context)>;

/// Trust-region policy optimization against a frozen reward on the given
/// contexts; the structural difference from the iteratively refit ratio.
std::map<std::string, MixturePolicy> optimize_policies(
    const RewardFactory& reward_factory, const std::vector<ReacherContext>& contexts,
    const ReacherTask& task, const EmDrexConfig& cfg, std::uint64_t seed);

/// Full baseline: reward training on train contexts, policy optimization on
/// test contexts with reward = scale * R(descriptors(w)).
std::map<std::string, MixturePolicy> run_em_drex(const DemoSet& demos,
                                                 const std::vector<ReacherContext>& test_contexts,
                                                 const ReacherTask& task,
                                                 const EmDrexConfig& cfg, std::uint64_t seed,
                                                 RewardNet* trained_net = nullptr);

}  // namespace vigor
