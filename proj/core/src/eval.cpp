#include "vigor/eval.hpp"

#include <algorithm>
#include <numeric>

namespace vigor {

namespace {

std::vector<ComponentStat> component_stats(const MixturePolicy& policy,
                                           const ReacherContext& context,
                                           const ReacherTask& task, int n_samples,
                                           std::uint64_t seed) {
  std::vector<ComponentStat> stats(policy.size());
  for (int z = 0; z < policy.size(); ++z) {
    Rng rng(derive_seed(seed, 0xea1, z));
    ComponentStat& s = stats[z];
    s.component = z;
    for (int i = 0; i < n_samples; ++i) {
      const Eigen::VectorXd w = policy.components[z].sample(rng);
      const auto d = distance_to_boundaries(
          ProMPWeights::from_flat(w, task.basis.n_basis, task.dofs), context, task);
      s.mean_d1 += d.first;
      s.mean_d2 += d.second;
      s.success_rate += is_success(d) ? 1.0 : 0.0;
    }
    s.mean_d1 /= n_samples;
    s.mean_d2 /= n_samples;
    s.mean_distance = s.mean_d1 + s.mean_d2;
    s.success_rate /= n_samples;
  }
  return stats;
}

std::vector<int> rank_components(const std::vector<ComponentStat>& stats) {
  std::vector<int> ranking(stats.size());
  std::iota(ranking.begin(), ranking.end(), 0);
  std::stable_sort(ranking.begin(), ranking.end(), [&](int a, int b) {
    return stats[a].mean_distance < stats[b].mean_distance;
  });
  return ranking;
}

int versatility_from_stats(const MixturePolicy& policy, const ReacherTask& task,
                           const std::vector<ComponentStat>& stats,
                           const std::vector<int>& ranking, const EvalConfig& cfg) {
  // Count solved components whose mean trajectories stay pairwise apart;
  // greedily in rank order so the best representative of a mode wins.
  std::vector<Trajectory> counted;
  int score = 0;
  for (int z : ranking) {
    if (stats[z].mean_distance >= cfg.success_threshold) continue;
    const Trajectory mean_traj =
        decode(ProMPWeights::from_flat(policy.components[z].mean(), task.basis.n_basis,
                                       task.dofs),
               task.trajectory_steps, task.basis);
    bool distinct = true;
    for (const auto& other : counted) {
      if (mean_joint_distance(mean_traj, other) <= cfg.versatility_threshold) {
        distinct = false;
        break;
      }
    }
    if (distinct) {
      counted.push_back(mean_traj);
      ++score;
    }
  }
  return score;
}

}  // namespace

int versatility_score(const MixturePolicy& policy, const ReacherContext& context,
                      const ReacherTask& task, const EvalConfig& cfg, std::uint64_t seed) {
  const auto stats =
      component_stats(policy, context, task, cfg.samples_per_component, seed);
  return versatility_from_stats(policy, task, stats, rank_components(stats), cfg);
}

EvalReport evaluate(const std::map<std::string, MixturePolicy>& policies,
                    const std::vector<ReacherContext>& contexts, const ReacherTask& task,
                    const EvalConfig& cfg, std::uint64_t seed) {
  if (policies.empty()) throw InputError("evaluate: empty policy map");
  if (cfg.samples_per_component < 1) {
    throw ConfigError("evaluate: samples_per_component must be >= 1");
  }
  EvalReport report;
  report.seed = seed;
  report.samples_per_component = cfg.samples_per_component;
  report.contexts.resize(contexts.size());

  parallel_for(static_cast<int>(contexts.size()), cfg.workers, [&](int ci) {
    const ReacherContext& context = contexts[ci];
    const MixturePolicy& policy = policies.at(context.id);
    ContextEval& ce = report.contexts[ci];
    ce.context_id = context.id;
    ce.components = component_stats(policy, context, task, cfg.samples_per_component,
                                    derive_seed(seed, 0xc0, ci));
    ce.ranking = rank_components(ce.components);
    const ComponentStat& best = ce.components[ce.ranking.front()];
    ce.best_mean_distance = best.mean_distance;
    ce.best_success_rate = best.success_rate;
    ce.versatility = versatility_from_stats(policy, task, ce.components, ce.ranking, cfg);
  });

  for (const auto& ce : report.contexts) {
    report.mean_best_distance += ce.best_mean_distance;
    report.mean_best_success += ce.best_success_rate;
    report.total_versatility += ce.versatility;
  }
  report.mean_best_distance /= static_cast<double>(report.contexts.size());
  report.mean_best_success /= static_cast<double>(report.contexts.size());
  return report;
}

}  // namespace vigor
