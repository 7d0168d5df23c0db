#pragma once

#include <map>
#include <string>
#include <vector>

#include "vigor/demo_oracle.hpp"
#include "vigor/discriminator.hpp"
#include "vigor/em_drex.hpp"
#include "vigor/eval.hpp"
#include "vigor/trainer.hpp"

namespace vigor::io {

// ProMP weights: {n_basis, action_dim, weights: row-major flat array}
std::string weights_to_json(const ProMPWeights& w);
ProMPWeights weights_from_json(const std::string& text);

// Policy snapshot: {context_id, d, Z, log_weights, components:
//   [{mean, covariance (row-major)}]}
std::string policy_to_json(const MixturePolicy& policy);
MixturePolicy policy_from_json(const std::string& text);

std::string policies_to_json(const std::map<std::string, MixturePolicy>& policies);
std::map<std::string, MixturePolicy> policies_from_json(const std::string& text);

// Network snapshot: {input_width, layers, parameters, running statistics}
std::string network_to_json(const nn::Network& net);
nn::Network network_from_json(const std::string& text);

// Estimator snapshot: normalization statistics plus member networks.
std::string estimator_to_json(const RatioEstimator& est);
RatioEstimator estimator_from_json(const std::string& text);

std::string reward_net_to_json(const RewardNet& net);
RewardNet reward_net_from_json(const std::string& text);

// Context set: array of {id, target1, target2, radius, split}
std::string context_set_to_json(const ContextSet& set);
ContextSet context_set_from_json(const std::string& text);

// Demo file: {contexts, demos: [{context_id, weights}], provenance}
std::string demo_set_to_json(const DemoSet& set, const ContextSet& contexts);
std::pair<DemoSet, ContextSet> demo_set_from_json(const std::string& text);

// Raw trajectory import: array of {context_id, trajectory: T x dof angles}
std::vector<std::pair<std::string, Trajectory>> raw_trajectories_from_json(
    const std::string& text);

std::string report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);  // one row per context x component

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace vigor::io
