#include "taskseq/context.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace taskseq {

std::vector<TaskSeq> sample_random(std::size_t n, int num_tasks, int seq_len, Rng& rng) {
  if (num_tasks < 1 || seq_len < 1)
    throw std::invalid_argument("sample_random: need num_tasks >= 1 and seq_len >= 1");
  std::vector<TaskSeq> out(n);
  for (auto& seq : out) {
    seq.resize(static_cast<std::size_t>(seq_len));
    for (auto& t : seq) t = static_cast<TaskId>(rng.uniform_int(0, num_tasks - 1));
  }
  return out;
}

MutationResult mutate(const std::vector<TaskSeq>& optimal, int num_tasks, Rng& rng) {
  if (optimal.empty()) throw std::invalid_argument("mutate: empty optimal set");
  const int len = static_cast<int>(optimal.front().size());
  const std::set<TaskSeq> members(optimal.begin(), optimal.end());

  constexpr int kSuffixRetries = 16;
  constexpr int kSourceRetries = 16;

  MutationResult res;
  for (int outer = 0; outer < kSourceRetries; ++outer) {
    res.source_index = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(optimal.size()) - 1));
    // L_mut in {floor(L/2), ..., L-1}: at least one position is resampled.
    res.preserved_prefix =
        static_cast<int>(rng.uniform_int(len / 2, len - 1));
    const TaskSeq& source = optimal[res.source_index];
    for (int inner = 0; inner < kSuffixRetries; ++inner) {
      res.tasks.assign(source.begin(), source.begin() + res.preserved_prefix);
      for (int k = res.preserved_prefix; k < len; ++k)
        res.tasks.push_back(static_cast<TaskId>(rng.uniform_int(0, num_tasks - 1)));
      if (members.find(res.tasks) == members.end()) {
        res.exhausted = false;
        return res;
      }
    }
  }
  res.exhausted = true;  // pathological case: completions keep landing in S*
  return res;
}

std::pair<int, int> mix_context(int c, int c_min, int c_max) {
  if (c_max <= c_min)
    throw std::invalid_argument("mix_context: need c_max > c_min");
  if (c < c_min || c > c_max)
    throw std::invalid_argument("mix_context: c outside [c_min, c_max]");
  const int c_mut = (c * (c - c_min)) / (c_max - c_min);
  return {c - c_mut, c_mut};
}

ContextBatch build_training_context(const TSProblem& problem, int c, int c_min,
                                    int c_max, double alpha, Rng& rng) {
  const auto& cfg = problem.config;
  const auto [c_rand, c_mut] = mix_context(c, c_min, c_max);
  const std::set<TaskSeq> members(problem.optimal.begin(), problem.optimal.end());

  ContextBatch batch;
  batch.problem_id = problem.problem_id;
  batch.c_min = c_min;
  batch.c_max = c_max;
  batch.sequences.reserve(static_cast<std::size_t>(c));

  constexpr int kRandomRetries = 64;
  for (int i = 0; i < c_rand; ++i) {
    TaskSeq seq;
    bool ok = false;
    for (int r = 0; r < kRandomRetries; ++r) {
      seq = sample_random(1, cfg.num_tasks, cfg.sequence_length, rng).front();
      if (members.find(seq) == members.end()) { ok = true; break; }
    }
    if (!ok)
      throw std::runtime_error(
          "build_training_context: could not draw a non-optimal random sequence");
    LabeledSequence ls;
    ls.tasks = std::move(seq);
    ls.utility = utility_vector(ls.tasks, problem.optimal, alpha);
    ls.source = SequenceSource::random;
    batch.sequences.push_back(std::move(ls));
  }
  int dropped = 0;
  for (int i = 0; i < c_mut; ++i) {
    MutationResult m = mutate(problem.optimal, cfg.num_tasks, rng);
    if (m.exhausted) {  // flagged: drop and redraw, within a bounded budget
      if (++dropped > 64)
        throw std::runtime_error(
            "build_training_context: mutation cannot produce non-optimal sequences");
      --i;
      continue;
    }
    LabeledSequence ls;
    ls.tasks = std::move(m.tasks);
    ls.utility = utility_vector(ls.tasks, problem.optimal, alpha);
    ls.source = SequenceSource::mutated;
    batch.sequences.push_back(std::move(ls));
  }
  return batch;
}

ContextBatch build_training_context(const TSProblem& problem, int c_min, int c_max,
                                    double alpha, Rng& rng) {
  const int c = static_cast<int>(rng.uniform_int(c_min, c_max));
  return build_training_context(problem, c, c_min, c_max, alpha, rng);
}

}  // namespace taskseq
