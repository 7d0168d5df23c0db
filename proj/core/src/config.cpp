#include "vigor/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vigor {

namespace {

using nlohmann::json;

json basis_to_json(const BasisConfig& b) {
  return {{"n_basis", b.n_basis},
          {"bandwidth_factor", b.bandwidth_factor},
          {"center_margin", b.center_margin}};
}

void basis_from_json(const json& j, BasisConfig& b) {
  b.n_basis = j.value("n_basis", b.n_basis);
  b.bandwidth_factor = j.value("bandwidth_factor", b.bandwidth_factor);
  b.center_margin = j.value("center_margin", b.center_margin);
}

std::string descriptor_set_name(DescriptorSet s) {
  switch (s) {
    case DescriptorSet::Geometric: return "geometric";
    case DescriptorSet::Angles: return "angles";
    case DescriptorSet::Jointwise: return "jointwise";
  }
  return "geometric";
}

DescriptorSet descriptor_set_from_name(const std::string& name) {
  if (name == "geometric") return DescriptorSet::Geometric;
  if (name == "angles") return DescriptorSet::Angles;
  if (name == "jointwise") return DescriptorSet::Jointwise;
  throw ConfigError("unknown descriptor set: " + name);
}

json task_to_json(const ReacherTask& t) {
  return {{"trajectory_steps", t.trajectory_steps},
          {"dofs", t.dofs},
          {"basis", basis_to_json(t.basis)},
          {"descriptor_set", descriptor_set_name(t.descriptors.set)}};
}

void task_from_json(const json& j, ReacherTask& t) {
  t.trajectory_steps = j.value("trajectory_steps", t.trajectory_steps);
  t.dofs = j.value("dofs", t.dofs);
  if (j.contains("basis")) basis_from_json(j.at("basis"), t.basis);
  if (j.contains("descriptor_set")) {
    t.descriptors.set = descriptor_set_from_name(j.at("descriptor_set").get<std::string>());
  }
}

json trust_region_to_json(const TrustRegionConfig& t) {
  return {{"kl_bound", t.kl_bound},
          {"samples_per_component", t.samples_per_component},
          {"ridge", t.ridge},
          {"eta_min", t.eta_min},
          {"eta_max", t.eta_max}};
}

void trust_region_from_json(const json& j, TrustRegionConfig& t) {
  t.kl_bound = j.value("kl_bound", t.kl_bound);
  t.samples_per_component = j.value("samples_per_component", t.samples_per_component);
  t.ridge = j.value("ridge", t.ridge);
  t.eta_min = j.value("eta_min", t.eta_min);
  t.eta_max = j.value("eta_max", t.eta_max);
}

json discriminator_to_json(const DiscriminatorConfig& d) {
  return {{"ensemble_size", d.ensemble_size},
          {"conv_layers", d.conv_layers},
          {"channels", d.channels},
          {"kernel_size", d.kernel_size},
          {"dropout_rate", d.dropout_rate},
          {"batchnorm", d.batchnorm},
          {"loss", d.loss == DiscriminatorLoss::Stepwise ? "stepwise" : "full"},
          {"batch_size", d.batch_size},
          {"learning_rate", d.learning_rate},
          {"validation_split", d.validation_split},
          {"patience", d.patience},
          {"max_epochs", d.max_epochs}};
}

void discriminator_from_json(const json& j, DiscriminatorConfig& d) {
  d.ensemble_size = j.value("ensemble_size", d.ensemble_size);
  d.conv_layers = j.value("conv_layers", d.conv_layers);
  d.channels = j.value("channels", d.channels);
  d.kernel_size = j.value("kernel_size", d.kernel_size);
  d.dropout_rate = j.value("dropout_rate", d.dropout_rate);
  d.batchnorm = j.value("batchnorm", d.batchnorm);
  if (j.contains("loss")) {
    const std::string name = j.at("loss").get<std::string>();
    if (name == "stepwise") {
      d.loss = DiscriminatorLoss::Stepwise;
    } else if (name == "full") {
      d.loss = DiscriminatorLoss::Full;
    } else {
      throw ConfigError("unknown discriminator loss: " + name);
    }
  }
  d.batch_size = j.value("batch_size", d.batch_size);
  d.learning_rate = j.value("learning_rate", d.learning_rate);
  d.validation_split = j.value("validation_split", d.validation_split);
  d.patience = j.value("patience", d.patience);
  d.max_epochs = j.value("max_epochs", d.max_epochs);
}

}  // namespace

void RunConfig::validate() const {
  task.basis.validate();
  if (task.trajectory_steps < 2) throw ConfigError("config: trajectory_steps must be >= 2");
  if (task.dofs < 1) throw ConfigError("config: dofs must be >= 1");
  if (n_train_contexts < 1) throw ConfigError("config: n_train_contexts must be >= 1");
  if (n_test_contexts < 0) throw ConfigError("config: n_test_contexts must be >= 0");
  if (demos_per_context < 1) throw ConfigError("config: demos_per_context must be >= 1");
  if (trainer.n_components < 1) throw ConfigError("config: n_components must be >= 1");
  if (trainer.max_iterations < 0) throw ConfigError("config: max_iterations must be >= 0");
  if (!(trainer.trust_region.kl_bound > 0.0)) {
    throw ConfigError("config: kl_bound must be positive");
  }
  if (eval.samples_per_component < 1) {
    throw ConfigError("config: eval samples_per_component must be >= 1");
  }
  if (em_drex.noise_levels < 2) throw ConfigError("config: noise_levels must be >= 2");
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["algorithm"] = algorithm == Algorithm::Vigor ? "vigor" : "em-drex";
  j["task"] = task_to_json(task);
  j["contexts"] = {{"n_train", n_train_contexts}, {"n_test", n_test_contexts}};
  j["demos"] = {{"per_context", demos_per_context},
                {"via_fraction_min", demo_oracle.via_fraction_min},
                {"via_fraction_max", demo_oracle.via_fraction_max},
                {"ik_restarts", demo_oracle.ik_restarts},
                {"noise_sigma", demo_oracle.noise_sigma},
                {"min_yield", demo_oracle.min_yield}};
  j["policy"] = {{"n_components", trainer.n_components}, {"sigma_init", trainer.sigma_init}};
  j["trust_region"] = trust_region_to_json(trainer.trust_region);
  j["discriminator"] = discriminator_to_json(trainer.discriminator);
  j["trainer"] = {{"max_iterations", trainer.max_iterations},
                  {"convergence_tol", trainer.convergence_tol},
                  {"convergence_window", trainer.convergence_window},
                  {"metric_samples", trainer.metric_samples},
                  {"retries", trainer.retries}};
  j["em_drex"] = {{"em_components", em_drex.em_components},
                  {"base_noise", em_drex.base_noise},
                  {"noise_levels", em_drex.noise_levels},
                  {"max_noise_multiplier", em_drex.max_noise_multiplier},
                  {"total_em_samples", em_drex.total_em_samples},
                  {"pairs_per_context", em_drex.pairs_per_context},
                  {"reward_scale", em_drex.reward_scale},
                  {"optimize_iterations", em_drex.optimize_iterations},
                  {"reward_net", discriminator_to_json(em_drex.reward_net)},
                  {"trust_region", trust_region_to_json(em_drex.trust_region)}};
  j["eval"] = {{"samples_per_component", eval.samples_per_component},
               {"success_threshold", eval.success_threshold},
               {"versatility_threshold", eval.versatility_threshold}};
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("algorithm")) {
    const std::string name = j.at("algorithm").get<std::string>();
    if (name == "vigor") {
      cfg.algorithm = Algorithm::Vigor;
    } else if (name == "em-drex") {
      cfg.algorithm = Algorithm::EmDrex;
    } else {
      throw ConfigError("config: unknown algorithm: " + name);
    }
  }
  if (j.contains("task")) task_from_json(j.at("task"), cfg.task);
  if (j.contains("contexts")) {
    cfg.n_train_contexts = j.at("contexts").value("n_train", cfg.n_train_contexts);
    cfg.n_test_contexts = j.at("contexts").value("n_test", cfg.n_test_contexts);
  }
  if (j.contains("demos")) {
    const json& d = j.at("demos");
    cfg.demos_per_context = d.value("per_context", cfg.demos_per_context);
    cfg.demo_oracle.via_fraction_min =
        d.value("via_fraction_min", cfg.demo_oracle.via_fraction_min);
    cfg.demo_oracle.via_fraction_max =
        d.value("via_fraction_max", cfg.demo_oracle.via_fraction_max);
    cfg.demo_oracle.ik_restarts = d.value("ik_restarts", cfg.demo_oracle.ik_restarts);
    cfg.demo_oracle.noise_sigma = d.value("noise_sigma", cfg.demo_oracle.noise_sigma);
    cfg.demo_oracle.min_yield = d.value("min_yield", cfg.demo_oracle.min_yield);
  }
  if (j.contains("policy")) {
    cfg.trainer.n_components = j.at("policy").value("n_components", cfg.trainer.n_components);
    cfg.trainer.sigma_init = j.at("policy").value("sigma_init", cfg.trainer.sigma_init);
    cfg.em_drex.n_components = cfg.trainer.n_components;
    cfg.em_drex.sigma_init = cfg.trainer.sigma_init;
  }
  if (j.contains("trust_region")) {
    trust_region_from_json(j.at("trust_region"), cfg.trainer.trust_region);
    cfg.em_drex.trust_region = cfg.trainer.trust_region;
  }
  if (j.contains("discriminator")) {
    discriminator_from_json(j.at("discriminator"), cfg.trainer.discriminator);
  }
  if (j.contains("trainer")) {
    const json& t = j.at("trainer");
    cfg.trainer.max_iterations = t.value("max_iterations", cfg.trainer.max_iterations);
    cfg.trainer.convergence_tol = t.value("convergence_tol", cfg.trainer.convergence_tol);
    cfg.trainer.convergence_window =
        t.value("convergence_window", cfg.trainer.convergence_window);
    cfg.trainer.metric_samples = t.value("metric_samples", cfg.trainer.metric_samples);
    cfg.trainer.retries = t.value("retries", cfg.trainer.retries);
  }
  if (j.contains("em_drex")) {
    const json& e = j.at("em_drex");
    cfg.em_drex.em_components = e.value("em_components", cfg.em_drex.em_components);
    cfg.em_drex.base_noise = e.value("base_noise", cfg.em_drex.base_noise);
    cfg.em_drex.noise_levels = e.value("noise_levels", cfg.em_drex.noise_levels);
    cfg.em_drex.max_noise_multiplier =
        e.value("max_noise_multiplier", cfg.em_drex.max_noise_multiplier);
    cfg.em_drex.total_em_samples = e.value("total_em_samples", cfg.em_drex.total_em_samples);
    cfg.em_drex.pairs_per_context = e.value("pairs_per_context", cfg.em_drex.pairs_per_context);
    cfg.em_drex.reward_scale = e.value("reward_scale", cfg.em_drex.reward_scale);
    cfg.em_drex.optimize_iterations =
        e.value("optimize_iterations", cfg.em_drex.optimize_iterations);
    if (e.contains("reward_net")) discriminator_from_json(e.at("reward_net"), cfg.em_drex.reward_net);
    if (e.contains("trust_region")) trust_region_from_json(e.at("trust_region"), cfg.em_drex.trust_region);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    cfg.eval.samples_per_component =
        e.value("samples_per_component", cfg.eval.samples_per_component);
    cfg.eval.success_threshold = e.value("success_threshold", cfg.eval.success_threshold);
    cfg.eval.versatility_threshold =
        e.value("versatility_threshold", cfg.eval.versatility_threshold);
  }
  cfg.trainer.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("config: cannot write " + path);
  out << to_json();
}

}  // namespace vigor
