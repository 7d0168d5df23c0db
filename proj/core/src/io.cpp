#include "vigor/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vigor::io {

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

json matrix_to_json_flat(const Eigen::MatrixXd& m) {  // row-major
  json arr = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  }
  return arr;
}

Eigen::MatrixXd matrix_from_json_flat(const json& arr, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(arr.size()) != rows * cols) {
    throw InputError("io: flat matrix length mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = arr[k++].get<double>();
  }
  return m;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("io: invalid JSON: ") + e.what());
  }
}

json weights_to_json_obj(const ProMPWeights& w) {
  return {{"n_basis", w.n_basis()},
          {"action_dim", w.action_dim()},
          {"weights", matrix_to_json_flat(w.weights)}};
}

ProMPWeights weights_from_json_obj(const json& j) {
  ProMPWeights w;
  const int n_basis = j.at("n_basis").get<int>();
  const int action_dim = j.at("action_dim").get<int>();
  w.weights = matrix_from_json_flat(j.at("weights"), n_basis, action_dim);
  return w;
}

json policy_to_json_obj(const MixturePolicy& policy) {
  json components = json::array();
  for (const auto& c : policy.components) {
    components.push_back({{"mean", vector_to_json(c.mean())},
                          {"covariance", matrix_to_json_flat(c.covariance())}});
  }
  return {{"context_id", policy.context_id},
          {"d", policy.dim()},
          {"Z", policy.size()},
          {"log_weights", vector_to_json(policy.log_weights)},
          {"components", components}};
}

MixturePolicy policy_from_json_obj(const json& j) {
  MixturePolicy policy;
  policy.context_id = j.at("context_id").get<std::string>();
  const Eigen::Index d = j.at("d").get<Eigen::Index>();
  policy.log_weights = vector_from_json(j.at("log_weights"));
  for (const auto& c : j.at("components")) {
    policy.components.emplace_back(vector_from_json(c.at("mean")),
                                   matrix_from_json_flat(c.at("covariance"), d, d));
  }
  policy.validate();
  return policy;
}

std::string layer_kind_name(nn::LayerKind kind) {
  switch (kind) {
    case nn::LayerKind::Dense: return "dense";
    case nn::LayerKind::Conv1d: return "conv1d";
    case nn::LayerKind::Dropout: return "dropout";
    case nn::LayerKind::BatchNorm1d: return "batchnorm1d";
    case nn::LayerKind::Relu: return "relu";
    case nn::LayerKind::Sigmoid: return "sigmoid";
  }
  throw InputError("io: unknown layer kind");
}

nn::LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "dense") return nn::LayerKind::Dense;
  if (name == "conv1d") return nn::LayerKind::Conv1d;
  if (name == "dropout") return nn::LayerKind::Dropout;
  if (name == "batchnorm1d") return nn::LayerKind::BatchNorm1d;
  if (name == "relu") return nn::LayerKind::Relu;
  if (name == "sigmoid") return nn::LayerKind::Sigmoid;
  throw InputError("io: unknown layer kind " + name);
}

json network_to_json_obj(const nn::Network& net) {
  json layers = json::array();
  for (const auto& spec : net.layers()) {
    layers.push_back({{"kind", layer_kind_name(spec.kind)},
                      {"width", spec.width},
                      {"kernel_size", spec.kernel_size},
                      {"dropout_rate", spec.dropout_rate}});
  }
  json stats = json::array();
  for (const auto& [mean, var] : net.running_stats()) {
    stats.push_back({{"mean", vector_to_json(mean)}, {"var", vector_to_json(var)}});
  }
  return {{"input_width", net.input_width()},
          {"layers", layers},
          {"parameters", vector_to_json(net.parameters())},
          {"running_stats", stats}};
}

nn::Network network_from_json_obj(const json& j) {
  std::vector<nn::LayerSpec> layers;
  for (const auto& l : j.at("layers")) {
    nn::LayerSpec spec;
    spec.kind = layer_kind_from_name(l.at("kind").get<std::string>());
    spec.width = l.at("width").get<int>();
    spec.kernel_size = l.at("kernel_size").get<int>();
    spec.dropout_rate = l.at("dropout_rate").get<double>();
    layers.push_back(spec);
  }
  nn::Network net(j.at("input_width").get<int>(), layers, 0);
  net.set_parameters(vector_from_json(j.at("parameters")));
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> stats;
  for (const auto& s : j.at("running_stats")) {
    stats.emplace_back(vector_from_json(s.at("mean")), vector_from_json(s.at("var")));
  }
  net.set_running_stats(std::move(stats));
  return net;
}

json context_to_json_obj(const ReacherContext& c, const std::string& split) {
  return {{"id", c.id},
          {"target1", {c.target1.x(), c.target1.y()}},
          {"target2", {c.target2.x(), c.target2.y()}},
          {"radius", c.radius},
          {"split", split}};
}

ReacherContext context_from_json_obj(const json& j) {
  ReacherContext c;
  c.id = j.at("id").get<std::string>();
  c.target1 = Eigen::Vector2d(j.at("target1")[0].get<double>(), j.at("target1")[1].get<double>());
  c.target2 = Eigen::Vector2d(j.at("target2")[0].get<double>(), j.at("target2")[1].get<double>());
  c.radius = j.at("radius").get<double>();
  return c;
}

}  // namespace

std::string weights_to_json(const ProMPWeights& w) { return weights_to_json_obj(w).dump(2); }

ProMPWeights weights_from_json(const std::string& text) {
  return weights_from_json_obj(parse(text));
}

std::string policy_to_json(const MixturePolicy& policy) {
  return policy_to_json_obj(policy).dump(2);
}

MixturePolicy policy_from_json(const std::string& text) {
  return policy_from_json_obj(parse(text));
}

std::string policies_to_json(const std::map<std::string, MixturePolicy>& policies) {
  json arr = json::array();
  for (const auto& [id, policy] : policies) arr.push_back(policy_to_json_obj(policy));
  return arr.dump(2);
}

std::map<std::string, MixturePolicy> policies_from_json(const std::string& text) {
  std::map<std::string, MixturePolicy> out;
  for (const auto& j : parse(text)) {
    MixturePolicy policy = policy_from_json_obj(j);
    const std::string id = policy.context_id;
    out.emplace(id, std::move(policy));
  }
  return out;
}

std::string network_to_json(const nn::Network& net) { return network_to_json_obj(net).dump(); }

nn::Network network_from_json(const std::string& text) {
  return network_from_json_obj(parse(text));
}

std::string estimator_to_json(const RatioEstimator& est) {
  json members = json::array();
  for (const auto& net : est.ensemble) members.push_back(network_to_json_obj(net));
  json j = {{"feature_mean", vector_to_json(est.feature_mean)},
            {"feature_std", vector_to_json(est.feature_std)},
            {"quality", est.quality == TrainQuality::Ok ? "ok" : "degraded"},
            {"members", members}};
  return j.dump();
}

RatioEstimator estimator_from_json(const std::string& text) {
  const json j = parse(text);
  RatioEstimator est;
  est.feature_mean = vector_from_json(j.at("feature_mean"));
  est.feature_std = vector_from_json(j.at("feature_std"));
  est.quality =
      j.at("quality").get<std::string>() == "ok" ? TrainQuality::Ok : TrainQuality::Degraded;
  for (const auto& m : j.at("members")) est.ensemble.push_back(network_from_json_obj(m));
  return est;
}

std::string reward_net_to_json(const RewardNet& net) {
  json members = json::array();
  for (const auto& m : net.ensemble) members.push_back(network_to_json_obj(m));
  json j = {{"feature_mean", vector_to_json(net.feature_mean)},
            {"feature_std", vector_to_json(net.feature_std)},
            {"scale", net.scale},
            {"members", members}};
  return j.dump();
}

RewardNet reward_net_from_json(const std::string& text) {
  const json j = parse(text);
  RewardNet net;
  net.feature_mean = vector_from_json(j.at("feature_mean"));
  net.feature_std = vector_from_json(j.at("feature_std"));
  net.scale = j.at("scale").get<double>();
  for (const auto& m : j.at("members")) net.ensemble.push_back(network_from_json_obj(m));
  return net;
}

std::string context_set_to_json(const ContextSet& set) {
  json arr = json::array();
  for (const auto& c : set.train) arr.push_back(context_to_json_obj(c, "train"));
  for (const auto& c : set.test) arr.push_back(context_to_json_obj(c, "test"));
  return arr.dump(2);
}

ContextSet context_set_from_json(const std::string& text) {
  ContextSet set;
  for (const auto& j : parse(text)) {
    const std::string split = j.at("split").get<std::string>();
    if (split == "train") {
      set.train.push_back(context_from_json_obj(j));
    } else if (split == "test") {
      set.test.push_back(context_from_json_obj(j));
    } else {
      throw InputError("io: unknown context split " + split);
    }
  }
  return set;
}

std::string demo_set_to_json(const DemoSet& set, const ContextSet& contexts) {
  json demos = json::array();
  for (size_t ci = 0; ci < set.contexts.size(); ++ci) {
    for (const auto& w : set.demos[ci]) {
      demos.push_back(
          {{"context_id", set.contexts[ci].id}, {"weights", weights_to_json_obj(w)}});
    }
  }
  json j = {{"contexts", json::parse(context_set_to_json(contexts))},
            {"demos", demos},
            {"provenance", {{"seed", set.seed}, {"generator", "synthetic-oracle"}}}};
  return j.dump(2);
}

std::pair<DemoSet, ContextSet> demo_set_from_json(const std::string& text) {
  const json j = parse(text);
  ContextSet contexts = context_set_from_json(j.at("contexts").dump());
  DemoSet set;
  set.contexts = contexts.train;
  set.demos.resize(set.contexts.size());
  if (j.contains("provenance") && j.at("provenance").contains("seed")) {
    set.seed = j.at("provenance").at("seed").get<std::uint64_t>();
  }
  for (const auto& d : j.at("demos")) {
    const std::string id = d.at("context_id").get<std::string>();
    bool found = false;
    for (size_t ci = 0; ci < set.contexts.size(); ++ci) {
      if (set.contexts[ci].id == id) {
        set.demos[ci].push_back(weights_from_json_obj(d.at("weights")));
        found = true;
        break;
      }
    }
    if (!found) throw InputError("io: demo references unknown context " + id);
  }
  return {std::move(set), std::move(contexts)};
}

std::vector<std::pair<std::string, Trajectory>> raw_trajectories_from_json(
    const std::string& text) {
  std::vector<std::pair<std::string, Trajectory>> out;
  for (const auto& j : parse(text)) {
    const json& rows = j.at("trajectory");
    if (rows.empty()) throw InputError("io: empty raw trajectory");
    Trajectory traj;
    traj.values.resize(rows.size(), rows[0].size());
    for (size_t r = 0; r < rows.size(); ++r) {
      for (size_t c = 0; c < rows[r].size(); ++c) {
        traj.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            rows[r][c].get<double>();
      }
    }
    out.emplace_back(j.at("context_id").get<std::string>(), std::move(traj));
  }
  return out;
}

std::string report_to_json(const EvalReport& report) {
  json contexts = json::array();
  for (const auto& ce : report.contexts) {
    json components = json::array();
    for (const auto& s : ce.components) {
      components.push_back({{"component", s.component},
                            {"mean_distance", s.mean_distance},
                            {"mean_d1", s.mean_d1},
                            {"mean_d2", s.mean_d2},
                            {"success_rate", s.success_rate}});
    }
    contexts.push_back({{"context_id", ce.context_id},
                        {"components", components},
                        {"ranking", ce.ranking},
                        {"best_mean_distance", ce.best_mean_distance},
                        {"best_success_rate", ce.best_success_rate},
                        {"versatility", ce.versatility}});
  }
  json j = {{"contexts", contexts},
            {"mean_best_distance", report.mean_best_distance},
            {"mean_best_success", report.mean_best_success},
            {"total_versatility", report.total_versatility},
            {"seed", report.seed},
            {"samples_per_component", report.samples_per_component}};
  return j.dump(2);
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "context_id,component,rank,mean_d1,mean_d2,mean_distance,success_rate,versatility\n";
  for (const auto& ce : report.contexts) {
    std::vector<int> rank_of(ce.components.size());
    for (size_t r = 0; r < ce.ranking.size(); ++r) rank_of[ce.ranking[r]] = static_cast<int>(r);
    for (const auto& s : ce.components) {
      out << ce.context_id << ',' << s.component << ',' << rank_of[s.component] << ','
          << s.mean_d1 << ',' << s.mean_d2 << ',' << s.mean_distance << ',' << s.success_rate
          << ',' << ce.versatility << '\n';
    }
  }
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("io: cannot write " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("io: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace vigor::io
