#include "vigor/em_drex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace vigor {

namespace {

double ranking_pair_loss(double margin) {
  // -log sigma(margin), stable
  if (margin > 30.0) return std::exp(-margin);
  if (margin < -30.0) return -margin;
  return std::log1p(std::exp(-margin));
}

}  // namespace

MixturePolicy em_fit(const std::vector<Eigen::VectorXd>& data, int k, std::uint64_t rng_seed,
                     double covariance_reg, int max_iterations) {
  if (k < 1) throw ConfigError("em_fit: k must be >= 1");
  const int n = static_cast<int>(data.size());
  if (n < k) throw InputError("em_fit: fewer data points than components");
  const int d = static_cast<int>(data.front().size());

  for (int restart = 0; restart < 5; ++restart) {
    Rng rng(derive_seed(rng_seed, 0xe3, restart));

    // Means start at distinct data points, covariances at the (loaded)
    // global sample covariance.
    Eigen::VectorXd global_mean = Eigen::VectorXd::Zero(d);
    for (const auto& x : data) global_mean += x;
    global_mean /= n;
    Eigen::MatrixXd global_cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& x : data) {
      global_cov += (x - global_mean) * (x - global_mean).transpose();
    }
    global_cov /= n;
    global_cov.diagonal().array() += covariance_reg;

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<Eigen::VectorXd> means(k);
    std::vector<Eigen::MatrixXd> covs(k, global_cov);
    for (int z = 0; z < k; ++z) means[z] = data[order[z]];
    Eigen::VectorXd log_pi = Eigen::VectorXd::Constant(k, -std::log(static_cast<double>(k)));

    bool degenerate = false;
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iterations && !degenerate; ++it) {
      // E-step
      Eigen::MatrixXd log_resp(n, k);
      std::vector<std::optional<GaussianComponent>> comps(k);
      for (int z = 0; z < k; ++z) {
        try {
          comps[z] = GaussianComponent(means[z], covs[z]);
        } catch (const NumericalError&) {
          degenerate = true;
          break;
        }
      }
      if (degenerate) break;
      double ll = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int z = 0; z < k; ++z) {
          log_resp(i, z) = log_pi[z] + comps[z]->log_density(data[i]);
        }
        const double norm = logsumexp(log_resp.row(i).transpose());
        ll += norm;
        log_resp.row(i).array() -= norm;
      }
      if (ll < prev_ll - 1e-6 * std::abs(prev_ll) - 1e-9) {
        // EM must not decrease the likelihood; treat as degeneracy.
        degenerate = true;
        break;
      }
      if (it > 0 && std::abs(ll - prev_ll) < 1e-10 * std::max(1.0, std::abs(prev_ll))) {
        prev_ll = ll;
        break;
      }
      prev_ll = ll;

      // M-step with diagonal loading
      const Eigen::MatrixXd resp = log_resp.array().exp();
      for (int z = 0; z < k; ++z) {
        const double nz = resp.col(z).sum();
        if (nz < 1e-8) {
          degenerate = true;
          break;
        }
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < n; ++i) mu += resp(i, z) * data[i];
        mu /= nz;
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (int i = 0; i < n; ++i) {
          cov += resp(i, z) * (data[i] - mu) * (data[i] - mu).transpose();
        }
        cov /= nz;
        cov.diagonal().array() += covariance_reg;
        means[z] = mu;
        covs[z] = 0.5 * (cov + cov.transpose());
        log_pi[z] = std::log(nz / n);
      }
    }

    if (!degenerate) {
      MixturePolicy policy;
      for (int z = 0; z < k; ++z) policy.components.emplace_back(means[z], covs[z]);
      policy.log_weights = log_pi;
      const double norm = logsumexp(policy.log_weights);
      policy.log_weights.array() -= norm;
      return policy;
    }
  }
  throw NumericalError("em_fit: responsibilities collapsed in every restart");
}

NoiseLadder build_noise_ladder(const std::vector<MixturePolicy>& fit_policies,
                               double base_noise, int levels, double max_multiplier) {
  if (levels < 2) throw ConfigError("build_noise_ladder: need at least 2 levels");
  if (!(base_noise > 0.0)) throw ConfigError("build_noise_ladder: base_noise must be positive");
  if (max_multiplier < 1.0) {
    throw ConfigError("build_noise_ladder: max_multiplier must be >= 1");
  }
  NoiseLadder ladder;
  ladder.base_noise = base_noise;
  ladder.max_multiplier = max_multiplier;
  for (int l = 0; l < levels; ++l) {
    ladder.multipliers.push_back(
        base_noise * (1.0 + l * (max_multiplier - 1.0) / (levels - 1)));
  }
  for (const auto& policy : fit_policies) {
    std::vector<MixturePolicy> per_level;
    for (double m : ladder.multipliers) {
      MixturePolicy scaled;
      scaled.context_id = policy.context_id;
      scaled.log_weights = policy.log_weights;
      for (const auto& comp : policy.components) {
        scaled.components.emplace_back(comp.mean(), m * comp.covariance());
      }
      per_level.push_back(std::move(scaled));
    }
    ladder.per_context.push_back(std::move(per_level));
    ladder.context_ids.push_back(policy.context_id);
  }
  return ladder;
}

double drex_ranking_loss(double sum_reward_lower, double sum_reward_higher) {
  return ranking_pair_loss(sum_reward_lower - sum_reward_higher);
}

double drex_ranking_loss_batch(const nn::SeqBatch& logits) {
  if (logits.size() % 2 != 0) throw InputError("drex_ranking_loss_batch: odd batch");
  const int pairs = static_cast<int>(logits.size()) / 2;
  double total = 0.0;
  for (int p = 0; p < pairs; ++p) {
    total += ranking_pair_loss(logits[2 * p].sum() - logits[2 * p + 1].sum());
  }
  return total / pairs;
}

nn::LossResult drex_ranking_loss_with_grad(const nn::SeqBatch& logits) {
  if (logits.size() % 2 != 0) throw InputError("drex_ranking_loss_with_grad: odd batch");
  const int pairs = static_cast<int>(logits.size()) / 2;
  nn::LossResult out;
  out.dlogits.resize(logits.size());
  for (int p = 0; p < pairs; ++p) {
    const double margin = logits[2 * p].sum() - logits[2 * p + 1].sum();
    out.value += ranking_pair_loss(margin) / pairs;
    // d/dmargin of -log sigma(margin) = sigma(margin) - 1
    const double d = (1.0 / (1.0 + std::exp(-margin)) - 1.0) / pairs;
    out.dlogits[2 * p] = Eigen::MatrixXd::Constant(logits[2 * p].rows(), 1, d);
    out.dlogits[2 * p + 1] = Eigen::MatrixXd::Constant(logits[2 * p + 1].rows(), 1, -d);
  }
  return out;
}

double reward_value(const RewardNet& net, const Eigen::MatrixXd& descriptor_values) {
  if (net.ensemble.empty()) throw InputError("reward_value: empty ensemble");
  const Eigen::MatrixXd normalized =
      (descriptor_values.rowwise() - net.feature_mean.transpose()).array().rowwise() /
      net.feature_std.transpose().array();
  double total = 0.0;
  for (const auto& member : net.ensemble) total += member.forward(normalized).sum();
  return total / static_cast<double>(net.ensemble.size());
}

RewardNet train_reward(const DemoSet& demos, const ReacherTask& task, const EmDrexConfig& cfg,
                       std::uint64_t seed) {
  const int n_contexts = static_cast<int>(demos.contexts.size());
  if (n_contexts == 0) throw InputError("train_reward: empty demo set");

  // EM fits on the flattened demo weights, one GMM per training context.
  std::vector<MixturePolicy> fits;
  for (int ci = 0; ci < n_contexts; ++ci) {
    std::vector<Eigen::VectorXd> points;
    for (const auto& w : demos.demos[ci]) points.push_back(w.flattened());
    MixturePolicy fit = em_fit(points, cfg.em_components, derive_seed(seed, 0xe3f, ci));
    fit.context_id = demos.contexts[ci].id;
    fits.push_back(std::move(fit));
  }
  const NoiseLadder ladder =
      build_noise_ladder(fits, cfg.base_noise, cfg.noise_levels, cfg.max_noise_multiplier);

  // Descriptor samples per (context, level) cell.
  const int levels = ladder.levels();
  const int per_cell = std::max(2, cfg.total_em_samples / (n_contexts * levels));
  std::vector<std::vector<std::vector<Eigen::MatrixXd>>> cells(n_contexts);
  parallel_for(n_contexts, cfg.workers, [&](int ci) {
    cells[ci].resize(levels);
    for (int l = 0; l < levels; ++l) {
      const auto draws = sample(ladder.per_context[ci][l], per_cell,
                                derive_seed(seed, 0xce11, ci, l));
      for (const auto& draw : draws) {
        cells[ci][l].push_back(
            descriptors(ProMPWeights::from_flat(draw.weights, task.basis.n_basis, task.dofs),
                        demos.contexts[ci], task)
                .values);
      }
    }
  });

  // Frozen normalization over every ladder sample.
  const int features = static_cast<int>(cells[0][0][0].cols());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(features);
  long rows = 0;
  for (const auto& ctx : cells) {
    for (const auto& level : ctx) {
      for (const auto& m : level) {
        mean += m.colwise().sum().transpose();
        rows += m.rows();
      }
    }
  }
  mean /= static_cast<double>(rows);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(features);
  for (const auto& ctx : cells) {
    for (const auto& level : ctx) {
      for (const auto& m : level) {
        var += (m.rowwise() - mean.transpose()).array().square().colwise().sum().matrix();
      }
    }
  }
  var /= static_cast<double>(rows);

  RewardNet net;
  net.feature_mean = mean;
  net.feature_std = (var.array().sqrt() + 1e-8).matrix();
  net.scale = cfg.reward_scale;

  const auto normalize = [&](const Eigen::MatrixXd& values) {
    return ((values.rowwise() - net.feature_mean.transpose()).array().rowwise() /
            net.feature_std.transpose().array())
        .matrix();
  };

  // Same-context cross-level pairs, lower level first.
  const auto sample_pairs = [&](Rng& rng, int per_context) {
    nn::SeqBatch batch;
    for (int ci = 0; ci < n_contexts; ++ci) {
      for (int p = 0; p < per_context; ++p) {
        int l1 = rng.uniform_int(levels);
        int l2 = rng.uniform_int(levels - 1);
        if (l2 >= l1) ++l2;
        if (l1 > l2) std::swap(l1, l2);
        const auto& lower = cells[ci][l1];
        const auto& higher = cells[ci][l2];
        batch.push_back(normalize(lower[rng.uniform_int(static_cast<int>(lower.size()))]));
        batch.push_back(normalize(higher[rng.uniform_int(static_cast<int>(higher.size()))]));
      }
    }
    return batch;
  };

  const nn::SequenceLoss ranking_loss = [](const nn::SeqBatch& logits) {
    return drex_ranking_loss_with_grad(logits);
  };

  // Fixed validation pairs; training pairs are resampled each epoch.
  Rng val_rng(derive_seed(seed, 0x7a1));
  const int val_pairs_per_context =
      std::max(1, static_cast<int>(cfg.pairs_per_context * cfg.reward_net.validation_split));
  const nn::SeqBatch val_batch = sample_pairs(val_rng, val_pairs_per_context);

  std::vector<std::optional<nn::Network>> members(cfg.reward_net.ensemble_size);
  parallel_for(cfg.reward_net.ensemble_size, cfg.workers, [&](int member) {
    const std::uint64_t member_seed = derive_seed(seed, 0x23d, member);
    nn::Network network(features, cfg.reward_net.build_layers(), member_seed);
    nn::AdamState adam;
    Rng rng(derive_seed(member_seed, 0x9a1));

    Eigen::VectorXd best_params = network.parameters();
    auto best_stats = network.running_stats();
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 0; epoch < cfg.reward_net.max_epochs; ++epoch) {
      nn::SeqBatch epoch_batch = sample_pairs(rng, cfg.pairs_per_context);
      const int pair_stride = cfg.reward_net.batch_size;  // sequences per minibatch
      for (int start = 0; start < static_cast<int>(epoch_batch.size());
           start += pair_stride) {
        const int count =
            std::min<int>(pair_stride, static_cast<int>(epoch_batch.size()) - start);
        if (count < 2) break;
        nn::SeqBatch minibatch(epoch_batch.begin() + start,
                               epoch_batch.begin() + start + (count - count % 2));
        Eigen::VectorXd grad;
        network.loss_and_gradient(minibatch, ranking_loss, nn::Mode::Train,
                                  derive_seed(member_seed, epoch, start), &grad);
        adam_step(network, grad, cfg.reward_net.learning_rate, adam);
      }
      const double val =
          drex_ranking_loss_batch(network.forward_batch(val_batch, nn::Mode::Eval));
      if (val < best_val - 1e-12) {
        best_val = val;
        best_params = network.parameters();
        best_stats = network.running_stats();
        since_best = 0;
      } else if (++since_best >= cfg.reward_net.patience) {
        break;
      }
    }
    network.set_parameters(best_params);
    network.set_running_stats(best_stats);
    members[member] = std::move(network);
  });
  for (auto& m : members) net.ensemble.push_back(std::move(*m));
  return net;
}

std::map<std::string, MixturePolicy> optimize_policies(
    const RewardFactory& reward_factory, const std::vector<ReacherContext>& contexts,
    const ReacherTask& task, const EmDrexConfig& cfg, std::uint64_t seed) {
  std::map<std::string, MixturePolicy> policies;
  for (size_t ci = 0; ci < contexts.size(); ++ci) {
    policies.emplace(contexts[ci].id,
                     MixturePolicy::initial(contexts[ci].id, task.weight_dim(),
                                            cfg.n_components, cfg.sigma_init,
                                            derive_seed(seed, 0x0b1, ci)));
  }

  const int n_contexts = static_cast<int>(contexts.size());
  std::vector<std::vector<double>> distance_history(n_contexts);
  parallel_for(n_contexts, cfg.workers, [&](int ci) {
    const ReacherContext& context = contexts[ci];
    const ContextReward reward = reward_factory(context);
    // reward = -ratio, so the trust-region update maximizes it
    const RatioFn ratio = [&reward](const Eigen::VectorXd& w) { return -reward(w); };
    MixturePolicy& policy = policies.at(context.id);

    for (int it = 0; it < cfg.optimize_iterations; ++it) {
      for (int z = 0; z < policy.size(); ++z) {
        policy = update_component_from_ratio(policy, z, ratio, cfg.trust_region,
                                             derive_seed(seed, 0x09, ci, it * 131 + z));
      }
      // Best-component distance, for the plateau criterion.
      double best = std::numeric_limits<double>::infinity();
      for (int z = 0; z < policy.size(); ++z) {
        Rng rng(derive_seed(seed, 0xec, ci, it * 131 + z));
        double dist = 0.0;
        for (int s = 0; s < cfg.metric_samples; ++s) {
          const auto d = distance_to_boundaries(
              ProMPWeights::from_flat(policy.components[z].sample(rng), task.basis.n_basis,
                                      task.dofs),
              context, task);
          dist += d.first + d.second;
        }
        best = std::min(best, dist / cfg.metric_samples);
      }
      auto& hist = distance_history[ci];
      hist.push_back(best);
      const int w = cfg.convergence_window;
      if (static_cast<int>(hist.size()) > w) {
        const double then = hist[hist.size() - 1 - w];
        if (std::abs(best - then) / std::max(std::abs(then), 1e-8) < cfg.convergence_tol) {
          break;
        }
      }
    }
  });
  return policies;
}

std::map<std::string, MixturePolicy> run_em_drex(const DemoSet& demos,
                                                 const std::vector<ReacherContext>& test_contexts,
                                                 const ReacherTask& task,
                                                 const EmDrexConfig& cfg, std::uint64_t seed,
                                                 RewardNet* trained_net) {
  const RewardNet net = train_reward(demos, task, cfg, derive_seed(seed, 0x4e4d));
  if (trained_net) *trained_net = net;
  const RewardFactory factory = [&net, &task](const ReacherContext& context) -> ContextReward {
    return [&net, &task, context](const Eigen::VectorXd& w) {
      return net.scale *
             reward_value(net, descriptors(ProMPWeights::from_flat(w, task.basis.n_basis,
                                                                   task.dofs),
                                           context, task)
                                   .values);
    };
  };
  return optimize_policies(factory, test_contexts, task, cfg, derive_seed(seed, 0x0b7));
}

}  // namespace vigor
