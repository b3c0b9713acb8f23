#pragma once

#include <string>
#include <vector>

#include "taskseq/model.hpp"
#include "taskseq/prior.hpp"
#include "taskseq/trainer.hpp"

namespace taskseq {

struct EvalConfig {
  int iterations = 32;
  int init_context = 4;
  std::string methods = "pftsn,random,rule";
  double temperature = 0.0;  // 0: use the checkpoint's temperature
  bool greedy = false;
  int context_cap = 16;      // model context size cap during evaluation
};

struct DataConfig {
  int random_per_problem = 16;
  int mutated_per_problem = 16;
};

/// Full run configuration: sections [prior], [utility], [model], [train],
/// [eval], [data] in a key = value file. Unknown keys are rejected.
struct RunConfig {
  PriorConfig prior;
  double alpha = kDefaultAlpha;
  ModelConfig model;   // num_tasks/seq_len mirror the prior section
  TrainConfig train;
  EvalConfig eval;
  DataConfig data;

  /// Model config with num_tasks/seq_len filled in from the prior.
  ModelConfig resolved_model() const;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::string& path);
/// Resolved configuration rendered back in config-file syntax.
std::string show_config(const RunConfig& cfg);

}  // namespace taskseq
