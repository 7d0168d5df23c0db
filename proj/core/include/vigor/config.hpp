#pragma once

#include <string>

#include "vigor/demo_oracle.hpp"
#include "vigor/em_drex.hpp"
#include "vigor/eval.hpp"
#include "vigor/trainer.hpp"

namespace vigor {

enum class Algorithm { Vigor, EmDrex };

/// Everything one run needs, serializable as a single JSON document with
/// every default explicit. Seeds are always written out; no implicit
/// entropy enters a run.
struct RunConfig {
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::Vigor;

  ReacherTask task;
  int n_train_contexts = 6;
  int n_test_contexts = 6;
  int demos_per_context = 5;

  DemoOracleConfig demo_oracle;
  TrainerConfig trainer;
  EmDrexConfig em_drex;
  EvalConfig eval;

  void validate() const;

  std::string to_json() const;             // pretty-printed document
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace vigor
