#pragma once

#include <map>
#include <string>
#include <vector>

#include "vigor/demo_oracle.hpp"
#include "vigor/gmm.hpp"
#include "vigor/reacher.hpp"

namespace vigor {

struct EvalConfig {
  int samples_per_component = 100;
  double success_threshold = 0.05;      // component mean distance counts as solved
  double versatility_threshold = 0.3;   // rad, pairwise mean joint distance
  int workers = 1;
};

struct ComponentStat {
  int component = 0;
  double mean_distance = 0.0;  // mean over samples of d1 + d2
  double mean_d1 = 0.0;
  double mean_d2 = 0.0;
  double success_rate = 0.0;
};

struct ContextEval {
  std::string context_id;
  std::vector<ComponentStat> components;  // indexed by component
  std::vector<int> ranking;               // ascending mean_distance
  double best_mean_distance = 0.0;
  double best_success_rate = 0.0;
  int versatility = 0;
};

struct EvalReport {
  std::vector<ContextEval> contexts;
  double mean_best_distance = 0.0;
  double mean_best_success = 0.0;
  int total_versatility = 0;
  std::uint64_t seed = 0;
  int samples_per_component = 0;
};

/// Per-component sampling and ranking over the given contexts; the
/// best-ranked component supplies the headline distance and success rate.
EvalReport evaluate(const std::map<std::string, MixturePolicy>& policies,
                    const std::vector<ReacherContext>& contexts, const ReacherTask& task,
                    const EvalConfig& cfg, std::uint64_t seed);

/// Number of solved components (mean distance below the success threshold)
/// that are pairwise distinct in mean joint trajectory: counts the
/// distinct successful modes of one policy.
int versatility_score(const MixturePolicy& policy, const ReacherContext& context,
                      const ReacherTask& task, const EvalConfig& cfg, std::uint64_t seed);

}  // namespace vigor
