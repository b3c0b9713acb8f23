#pragma once

#include <string>
#include <vector>

#include "taskseq/prior.hpp"
#include "taskseq/utility.hpp"

namespace taskseq {

enum class SequenceSource { random, mutated, proposed };

struct LabeledSequence {
  TaskSeq tasks;
  UtilityVector utility;
  SequenceSource source = SequenceSource::random;
};

/// Observed (sequence, utility) pairs for one problem, the model input.
struct ContextBatch {
  std::string problem_id;
  std::vector<LabeledSequence> sequences;
  int c_min = 0;
  int c_max = 0;
};

struct MutationResult {
  TaskSeq tasks;
  std::size_t source_index = 0;  // index into the optimal set
  int preserved_prefix = 0;      // L_mut
  bool exhausted = false;        // every completion was optimal; caller drops
};

/// n i.i.d. sequences, each position uniform over [0, num_tasks).
std::vector<TaskSeq> sample_random(std::size_t n, int num_tasks, int seq_len, Rng& rng);

/// Preserves a random optimal prefix of length L_mut in {floor(L/2),..,L-1}
/// and resamples the suffix, rejecting results that land in the optimal set.
MutationResult mutate(const std::vector<TaskSeq>& optimal, int num_tasks, Rng& rng);

/// Adaptive context mixing: returns (C_rand, C_mut) with
/// C_mut = floor(C * (C - C_min) / (C_max - C_min)).
std::pair<int, int> mix_context(int c, int c_min, int c_max);

/// Assembles a training context of size `c` (C_rand random + C_mut mutated),
/// labeled against the problem's optimal set. Every sequence is non-optimal.
ContextBatch build_training_context(const TSProblem& problem, int c, int c_min,
                                    int c_max, double alpha, Rng& rng);

/// Same, drawing C uniformly from [c_min, c_max] first.
ContextBatch build_training_context(const TSProblem& problem, int c_min, int c_max,
                                    double alpha, Rng& rng);

}  // namespace taskseq
