#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vigor/config.hpp"
#include "vigor/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInputError = 2;
constexpr int kExitRuntimeError = 3;

struct CommonOptions {
  int workers = 2;
};

vigor::RunConfig load_config(const std::string& path, const CommonOptions& common) {
  vigor::RunConfig cfg = vigor::RunConfig::load(path);
  cfg.trainer.workers = common.workers;
  cfg.em_drex.workers = common.workers;
  cfg.eval.workers = common.workers;
  cfg.demo_oracle.workers = common.workers;
  return cfg;
}

std::string metrics_header(const std::vector<vigor::ReacherContext>& contexts) {
  std::ostringstream out;
  out << "iteration,train_distance,test_distance,train_success,test_success,mean_abs_ratio";
  for (const auto& c : contexts) {
    out << ',' << c.id << "_d1," << c.id << "_d2," << c.id << "_success";
  }
  out << '\n';
  return out.str();
}

std::string metrics_row(const vigor::IterationMetrics& m) {
  std::ostringstream out;
  out << m.iteration << ',' << m.train_distance << ',' << m.test_distance << ','
      << m.train_success << ',' << m.test_success << ',' << m.mean_abs_ratio;
  for (size_t i = 0; i < m.context_d1.size(); ++i) {
    out << ',' << m.context_d1[i] << ',' << m.context_d2[i] << ',' << m.context_success[i];
  }
  out << '\n';
  return out.str();
}

json metrics_to_json(const vigor::IterationMetrics& m) {
  return {{"iteration", m.iteration},
          {"train_distance", m.train_distance},
          {"test_distance", m.test_distance},
          {"train_success", m.train_success},
          {"test_success", m.test_success},
          {"mean_abs_ratio", m.mean_abs_ratio},
          {"context_d1", m.context_d1},
          {"context_d2", m.context_d2},
          {"context_success", m.context_success}};
}

vigor::IterationMetrics metrics_from_json(const json& j) {
  vigor::IterationMetrics m;
  m.iteration = j.at("iteration").get<int>();
  m.train_distance = j.at("train_distance").get<double>();
  m.test_distance = j.at("test_distance").get<double>();
  m.train_success = j.at("train_success").get<double>();
  m.test_success = j.at("test_success").get<double>();
  m.mean_abs_ratio = j.at("mean_abs_ratio").get<double>();
  m.context_d1 = j.at("context_d1").get<std::vector<double>>();
  m.context_d2 = j.at("context_d2").get<std::vector<double>>();
  m.context_success = j.at("context_success").get<std::vector<double>>();
  return m;
}

void write_checkpoint(const fs::path& dir, const vigor::TrainState& state) {
  fs::create_directories(dir);
  vigor::io::write_file((dir / "policies.json").string(),
                        vigor::io::policies_to_json(state.policies));
  if (state.estimator) {
    vigor::io::write_file((dir / "estimator.json").string(),
                          vigor::io::estimator_to_json(*state.estimator));
  }
  json st = {{"iteration", state.iteration}, {"history", json::array()}};
  for (const auto& m : state.history) st["history"].push_back(metrics_to_json(m));
  vigor::io::write_file((dir / "state.json").string(), st.dump(2));
}

vigor::TrainState read_checkpoint(const fs::path& dir) {
  vigor::TrainState state;
  state.policies = vigor::io::policies_from_json(
      vigor::io::read_file((dir / "policies.json").string()));
  const json st = json::parse(vigor::io::read_file((dir / "state.json").string()));
  state.iteration = st.at("iteration").get<int>();
  for (const auto& m : st.at("history")) state.history.push_back(metrics_from_json(m));
  if (fs::exists(dir / "estimator.json")) {
    state.estimator = vigor::io::estimator_from_json(
        vigor::io::read_file((dir / "estimator.json").string()));
  }
  return state;
}

fs::path checkpoint_dir(const fs::path& run_dir, int iteration) {
  std::ostringstream name;
  name << "iter_" << std::setw(6) << std::setfill('0') << iteration;
  return run_dir / "checkpoints" / name.str();
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  const fs::path root = run_dir / "checkpoints";
  if (!fs::exists(root)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    if (!fs::exists(entry.path() / "policies.json")) continue;
    if (!best || entry.path().filename().string() > best->filename().string()) {
      best = entry.path();
    }
  }
  return best;
}

int cmd_gen_demos(const std::string& config_path, const std::string& output,
                  const CommonOptions& common) {
  const vigor::RunConfig cfg = load_config(config_path, common);
  const vigor::ContextSet contexts = vigor::sample_context_set(
      cfg.n_train_contexts, cfg.n_test_contexts, vigor::derive_seed(cfg.seed, 0xc047e87));
  const vigor::DemoSet demos = vigor::build_demo_set(
      contexts.train, cfg.demos_per_context, cfg.task, cfg.demo_oracle,
      vigor::derive_seed(cfg.seed, 0xde305));

  const fs::path out_path(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  vigor::io::write_file(output, vigor::io::demo_set_to_json(demos, contexts));

  std::ostringstream summary;
  summary << "demo set: " << demos.total() << " demonstrations across "
          << demos.contexts.size() << " training contexts\n"
          << "per context: " << cfg.demos_per_context << "\n"
          << "generation attempts: " << demos.total_attempts << " (filter yield "
          << demos.filter_yield() << ")\n"
          << "test contexts: " << contexts.test.size() << "\n"
          << "seed: " << cfg.seed << "\n";
  vigor::io::write_file(out_path.string() + ".summary.txt", summary.str());
  std::cout << summary.str();
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& demos_path,
              const std::string& run_dir_arg, int max_iterations_override,
              const std::string& algorithm_override, int checkpoint_every, bool resume,
              const CommonOptions& common) {
  vigor::RunConfig cfg = load_config(config_path, common);
  if (max_iterations_override >= 0) cfg.trainer.max_iterations = max_iterations_override;
  if (!algorithm_override.empty()) {
    if (algorithm_override == "vigor") {
      cfg.algorithm = vigor::Algorithm::Vigor;
    } else if (algorithm_override == "em-drex") {
      cfg.algorithm = vigor::Algorithm::EmDrex;
    } else {
      throw vigor::ConfigError("unknown algorithm: " + algorithm_override);
    }
  }

  const fs::path run_dir(run_dir_arg);
  fs::create_directories(run_dir);
  cfg.save((run_dir / "config.json").string());

  auto [demos, contexts] =
      vigor::io::demo_set_from_json(vigor::io::read_file(demos_path));
  if (!fs::exists(run_dir / "demos.json")) {
    fs::copy_file(demos_path, run_dir / "demos.json");
  }

  if (cfg.algorithm == vigor::Algorithm::EmDrex) {
    vigor::RewardNet reward;
    auto policies = vigor::run_em_drex(demos, contexts.test, cfg.task, cfg.em_drex,
                                       cfg.seed, &reward);
    const fs::path final_dir = run_dir / "checkpoints" / "final";
    fs::create_directories(final_dir);
    vigor::io::write_file((final_dir / "policies.json").string(),
                          vigor::io::policies_to_json(policies));
    vigor::io::write_file((run_dir / "reward.json").string(),
                          vigor::io::reward_net_to_json(reward));
    json st = {{"iteration", 0}, {"history", json::array()}};
    vigor::io::write_file((final_dir / "state.json").string(), st.dump(2));
    std::cout << "em-drex run complete: " << policies.size() << " test policies\n";
    return 0;
  }

  vigor::Trainer trainer(demos, contexts.test, cfg.task, cfg.trainer);

  vigor::TrainState state = trainer.initial_state();
  const fs::path metrics_path = run_dir / "metrics.csv";
  if (resume) {
    const auto ckpt = latest_checkpoint(run_dir);
    if (!ckpt) throw vigor::InputError("train --resume: no checkpoint in " + run_dir_arg);
    state = read_checkpoint(*ckpt);
    std::cout << "resuming from iteration " << state.iteration << "\n";
  } else {
    vigor::io::write_file(metrics_path.string(), metrics_header(trainer.contexts()));
    write_checkpoint(checkpoint_dir(run_dir, 0), state);
  }

  std::ofstream metrics(metrics_path, std::ios::app);
  const auto on_iteration = [&](const vigor::TrainState& s,
                                const vigor::IterationMetrics& m) {
    metrics << metrics_row(m);
    metrics.flush();
    if (checkpoint_every > 0 && s.iteration % checkpoint_every == 0) {
      write_checkpoint(checkpoint_dir(run_dir, s.iteration), s);
    }
  };

  state = trainer.train(std::move(state), on_iteration);
  write_checkpoint(checkpoint_dir(run_dir, state.iteration), state);
  std::cout << "training complete at iteration " << state.iteration;
  if (!state.history.empty()) {
    std::cout << " (train distance " << state.history.back().train_distance
              << ", test success " << state.history.back().test_success << ")";
  }
  std::cout << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir_arg, std::uint64_t eval_seed,
             const CommonOptions& common) {
  const fs::path run_dir(run_dir_arg);
  if (!fs::exists(run_dir / "config.json")) {
    throw vigor::InputError("eval: missing config.json in " + run_dir_arg);
  }
  const vigor::RunConfig cfg = load_config((run_dir / "config.json").string(), common);
  const auto ckpt = latest_checkpoint(run_dir);
  if (!ckpt) throw vigor::InputError("eval: no checkpoint in " + run_dir_arg);
  const auto policies = vigor::io::policies_from_json(
      vigor::io::read_file((*ckpt / "policies.json").string()));

  auto [demos, contexts] = vigor::io::demo_set_from_json(
      vigor::io::read_file((run_dir / "demos.json").string()));

  // Test-context policies only; EM+D-REX checkpoints hold nothing else.
  std::map<std::string, vigor::MixturePolicy> test_policies;
  for (const auto& c : contexts.test) {
    const auto it = policies.find(c.id);
    if (it == policies.end()) {
      throw vigor::InputError("eval: checkpoint lacks policy for context " + c.id);
    }
    test_policies.emplace(c.id, it->second);
  }

  const vigor::EvalReport report = vigor::evaluate(test_policies, contexts.test, cfg.task,
                                                   cfg.eval, vigor::derive_seed(eval_seed, 0xe));
  vigor::io::write_file((run_dir / "report.json").string(), vigor::io::report_to_json(report));
  vigor::io::write_file((run_dir / "report.csv").string(), vigor::io::report_to_csv(report));

  // End-effector traces of the best-ranked component per test context.
  std::ostringstream traces;
  traces << "context_id,component,step,ee_x,ee_y\n";
  for (size_t ci = 0; ci < contexts.test.size(); ++ci) {
    const auto& ce = report.contexts[ci];
    const int best = ce.ranking.front();
    const auto& policy = test_policies.at(ce.context_id);
    const vigor::Trajectory traj = vigor::decode(
        vigor::ProMPWeights::from_flat(policy.components[best].mean(),
                                       cfg.task.basis.n_basis, cfg.task.dofs),
        cfg.task.trajectory_steps, cfg.task.basis);
    const Eigen::MatrixXd ee = vigor::end_effector_path(traj);
    for (int t = 0; t < cfg.task.trajectory_steps; ++t) {
      traces << ce.context_id << ',' << best << ',' << t << ',' << ee(t, 0) << ','
             << ee(t, 1) << '\n';
    }
  }
  vigor::io::write_file((run_dir / "traces.csv").string(), traces.str());

  std::cout << "mean best-component distance: " << report.mean_best_distance << "\n"
            << "mean best-component success rate: " << report.mean_best_success << "\n"
            << "total versatility: " << report.total_versatility << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Versatile trajectory-distribution imitation on the planar reacher"};
  app.require_subcommand(1);

  CommonOptions common;
  app.add_option("--workers", common.workers, "Worker threads for parallel regions")
      ->capture_default_str();

  std::string config_path;
  std::string demos_path;
  std::string output;
  std::string run_dir;
  std::string algorithm;
  int max_iterations = -1;
  int checkpoint_every = 50;
  bool resume = false;
  std::uint64_t eval_seed = 0;

  auto* gen = app.add_subcommand("gen-demos", "Generate and filter synthetic demonstrations");
  gen->fallthrough();
  gen->add_option("--config", config_path, "Run configuration JSON")->required();
  gen->add_option("--output", output, "Demo file to write")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train policies (vigor or em-drex)");
  train->fallthrough();
  train->add_option("--config", config_path, "Run configuration JSON")->required();
  train->add_option("--demos", demos_path, "Demo file from gen-demos")->required();
  train->add_option("--run-dir", run_dir, "Output run directory")->required();
  train->add_option("--max-iterations", max_iterations, "Override config max iterations");
  train->add_option("--algorithm", algorithm, "Override algorithm: vigor | em-drex");
  train->add_option("--checkpoint-every", checkpoint_every, "Checkpoint period (iterations)")
      ->capture_default_str();
  train->add_flag("--resume", resume, "Continue from the latest checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate the latest checkpoint of a run");
  eval_cmd->fallthrough();
  eval_cmd->add_option("run_dir", run_dir, "Run directory")->required();
  eval_cmd->add_option("--seed", eval_seed, "Evaluation sampling seed")->capture_default_str();

  auto* print_cfg =
      app.add_subcommand("print-default-config", "Print the built-in default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInputError;
  }

  try {
    if (gen->parsed()) {
      if (output.empty()) output = "demos.json";
      return cmd_gen_demos(config_path, output, common);
    }
    if (train->parsed()) {
      return cmd_train(config_path, demos_path, run_dir, max_iterations, algorithm,
                       checkpoint_every, resume, common);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(run_dir, eval_seed, common);
    }
    if (print_cfg->parsed()) {
      std::cout << vigor::RunConfig{}.to_json();
      return 0;
    }
  } catch (const vigor::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const vigor::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return 0;
}
