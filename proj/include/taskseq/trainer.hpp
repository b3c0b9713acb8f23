#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "taskseq/context.hpp"
#include "taskseq/model.hpp"
#include "taskseq/prior.hpp"

namespace taskseq {

struct TrainConfig {
  int steps = 20000;
  int batch_size = 1024;
  double lr = 1e-3;
  int warmup_steps = 500;
  double weight_decay = 1e-3;
  int c_min = 4;
  int c_max = 16;
  int min_over_optimal_cap = 8;  // M: teacher-forced candidates per element
  std::uint64_t seed = 0;
  int checkpoint_every = 1000;
  double alpha = kDefaultAlpha;

  void validate() const;
  double lr_at(int step) const;  // linear warmup to lr, then constant
};

/// One problem plus optional pre-generated context pools (dataset mode).
struct TrainProblem {
  TSProblem problem;
  std::vector<LabeledSequence> random_pool;   // empty: draw fresh
  std::vector<LabeledSequence> mutated_pool;  // empty: draw fresh
};

using ProblemSource = std::function<TrainProblem(Rng&)>;

/// Source that samples a fresh problem from the prior per call.
ProblemSource prior_problem_source(const PriorConfig& prior);

struct TrainLogRecord {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  bool skipped = false;
};

struct TrainResult {
  std::vector<TrainLogRecord> log;
  int skipped_steps = 0;
};

/// Teacher-forced negative log-likelihood of `target` (summed over the L
/// positions) given the encoded context.
Tensor nll_of_target(const Pftsn& model, const ContextBatch& context,
                     const TaskSeq& target, bool training = false, Rng* rng = nullptr);

/// Minimum nll over up to `m_cap` optimal candidates (all of them when the
/// set is small enough). Gradients flow only through the achieving
/// candidate; ties break toward the lowest candidate index.
Tensor loss_min_over_optimal(const Pftsn& model, const ContextBatch& context,
                             const std::vector<TaskSeq>& optimal, int m_cap,
                             Rng& rng, bool training = false,
                             Rng* dropout_rng = nullptr);

/// Meta-trains the model over a fresh problem per batch element per step.
/// Writes `train_log.jsonl`, periodic checkpoints, and `model_final.ckpt`
/// under out_dir (skipped when out_dir is empty). Single-threaded and fully
/// deterministic given (configs, seed); the wall-time fields in the log are
/// the only nondeterministic output.
Pftsn meta_train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const ProblemSource& source, const std::string& out_dir,
                 TrainResult* result = nullptr, std::ostream* progress = nullptr);

}  // namespace taskseq
