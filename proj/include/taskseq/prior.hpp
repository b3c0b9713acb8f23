#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taskseq/rng.hpp"

namespace taskseq {

using TaskId = std::int32_t;
using TaskSeq = std::vector<TaskId>;

/// Depth-layered DAG whose root-to-leaf paths, mapped through node task
/// labels, define the optimal sequence set of a problem. Node ids are
/// indices into `tasks`; every edge goes from depth d to depth d+1.
struct TaskGraph {
  std::vector<TaskId> tasks;                 // node id -> task label
  std::vector<std::pair<int, int>> edges;    // (u, v), u -> v
  std::vector<int> depth;                    // node id -> depth (roots = 0)

  bool empty() const { return tasks.empty(); }
  std::size_t num_nodes() const { return tasks.size(); }

  std::vector<int> roots() const;
  std::vector<int> leaves() const;
  /// Depth shared by all leaves; -1 for the empty graph.
  int leaf_depth() const;
  /// Throws if the graph violates the layering/acyclicity invariants.
  void validate() const;
};

struct PriorConfig {
  int num_tasks = 8;        // N
  int sequence_length = 8;  // L
  int k_max = 2;
  int optimal_set_cap = 4096;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TSProblem {
  TaskGraph graph;
  std::vector<TaskSeq> optimal;  // S*, lexicographically sorted, deduplicated
  PriorConfig config;
  std::string problem_id;
};

// Graph expansion rules. Each returns the expanded graph; inputs are not
// modified. `max_len` is the sequence-length budget L (levels, not edges).

/// Appends one node labeled `task`, fed by every current leaf.
TaskGraph expand_atomic(const TaskGraph& graph, TaskId task, int max_len);

/// Appends |tasks| parallel nodes, each fed by every current leaf.
TaskGraph expand_or(const TaskGraph& graph, const std::vector<TaskId>& tasks,
                    int max_len, int k_max);

/// Appends one fresh k-node path per permutation of `tasks`; the head of
/// each path is fed by every current leaf.
TaskGraph expand_and(const TaskGraph& graph, const std::vector<TaskId>& tasks,
                     int max_len);

/// All root-to-leaf task sequences, deduplicated and sorted. Throws on
/// ragged path lengths.
std::vector<TaskSeq> enumerate_optimal(const TaskGraph& graph);

/// Number of distinct root-to-leaf node paths (pre-dedup), for cap checks.
std::uint64_t count_paths(const TaskGraph& graph);

/// Prefix trie over S: one node per distinct prefix, so root-to-leaf paths
/// reproduce S exactly, with no recombination across shared interior tasks.
TaskGraph trie_from_sequences(const std::vector<TaskSeq>& sequences);

/// Draws one problem from the expansion prior. Resamples (up to a bounded
/// retry budget) whenever |S*| exceeds config.optimal_set_cap.
TSProblem sample_problem(const PriorConfig& config, Rng& rng);

}  // namespace taskseq
