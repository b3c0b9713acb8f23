#include "taskseq/prior.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace taskseq {

namespace {

std::vector<int> out_degree(const TaskGraph& g) {
  std::vector<int> deg(g.num_nodes(), 0);
  for (const auto& [u, v] : g.edges) deg[static_cast<std::size_t>(u)]++;
  return deg;
}

std::vector<int> in_degree(const TaskGraph& g) {
  std::vector<int> deg(g.num_nodes(), 0);
  for (const auto& [u, v] : g.edges) deg[static_cast<std::size_t>(v)]++;
  return deg;
}

void check_edge_bounds(const TaskGraph& g) {
  const int n = static_cast<int>(g.num_nodes());
  for (const auto& [u, v] : g.edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw std::invalid_argument("TaskGraph: edge references missing node " +
                                  std::to_string(u < 0 || u >= n ? u : v));
  }
}

}  // namespace

std::vector<int> TaskGraph::roots() const {
  auto deg = in_degree(*this);
  std::vector<int> out;
  for (std::size_t i = 0; i < deg.size(); ++i)
    if (deg[i] == 0) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> TaskGraph::leaves() const {
  auto deg = out_degree(*this);
  std::vector<int> out;
  for (std::size_t i = 0; i < deg.size(); ++i)
    if (deg[i] == 0) out.push_back(static_cast<int>(i));
  return out;
}

int TaskGraph::leaf_depth() const {
  if (empty()) return -1;
  const auto ls = leaves();
  const int d = depth[static_cast<std::size_t>(ls.front())];
  for (int l : ls)
    if (depth[static_cast<std::size_t>(l)] != d)
      throw std::runtime_error("TaskGraph: leaves at mixed depths");
  return d;
}

void TaskGraph::validate() const {
  if (tasks.size() != depth.size())
    throw std::invalid_argument("TaskGraph: tasks/depth size mismatch");
  check_edge_bounds(*this);
  for (const auto& [u, v] : edges) {
    if (depth[static_cast<std::size_t>(v)] != depth[static_cast<std::size_t>(u)] + 1)
      throw std::invalid_argument("TaskGraph: edge skips a depth level");
  }
  for (int r : roots())
    if (depth[static_cast<std::size_t>(r)] != 0)
      throw std::invalid_argument("TaskGraph: root at nonzero depth");
  // Depth layering over a finite graph rules out cycles, but check edges
  // once more against recomputed layering in case depths were tampered with.
  (void)leaf_depth();
}

void PriorConfig::validate() const {
  if (num_tasks < 2) throw std::invalid_argument("PriorConfig: num_tasks must be >= 2");
  if (sequence_length < 1)
    throw std::invalid_argument("PriorConfig: sequence_length must be >= 1");
  if (k_max < 2 || k_max > num_tasks)
    throw std::invalid_argument("PriorConfig: k_max must be in [2, num_tasks]");
  if (optimal_set_cap < 1)
    throw std::invalid_argument("PriorConfig: optimal_set_cap must be >= 1");
}

TaskGraph expand_atomic(const TaskGraph& graph, TaskId task, int max_len) {
  const int levels = graph.empty() ? 0 : graph.leaf_depth() + 1;
  if (levels + 1 > max_len)
    throw std::invalid_argument("expand_atomic: depth budget exceeded");
  TaskGraph g = graph;
  const int v = static_cast<int>(g.num_nodes());
  for (int leaf : graph.leaves()) g.edges.emplace_back(leaf, v);
  g.tasks.push_back(task);
  g.depth.push_back(levels);
  return g;
}

TaskGraph expand_or(const TaskGraph& graph, const std::vector<TaskId>& tasks,
                    int max_len, int k_max) {
  if (tasks.empty() || static_cast<int>(tasks.size()) > k_max)
    throw std::invalid_argument("expand_or: need 1..k_max tasks");
  if (std::set<TaskId>(tasks.begin(), tasks.end()).size() != tasks.size())
    throw std::invalid_argument("expand_or: duplicate tasks in draw");
  const int levels = graph.empty() ? 0 : graph.leaf_depth() + 1;
  if (levels + 1 > max_len)
    throw std::invalid_argument("expand_or: depth budget exceeded");
  TaskGraph g = graph;
  const auto leaves = graph.leaves();
  for (TaskId t : tasks) {
    const int v = static_cast<int>(g.num_nodes());
    for (int leaf : leaves) g.edges.emplace_back(leaf, v);
    g.tasks.push_back(t);
    g.depth.push_back(levels);
  }
  return g;
}

TaskGraph expand_and(const TaskGraph& graph, const std::vector<TaskId>& tasks,
                     int max_len) {
  if (tasks.empty()) throw std::invalid_argument("expand_and: empty task draw");
  if (std::set<TaskId>(tasks.begin(), tasks.end()).size() != tasks.size())
    throw std::invalid_argument("expand_and: duplicate tasks in draw");
  const int k = static_cast<int>(tasks.size());
  const int levels = graph.empty() ? 0 : graph.leaf_depth() + 1;
  if (levels + k > max_len)
    throw std::invalid_argument("expand_and: depth budget exceeded");
  TaskGraph g = graph;
  const auto leaves = graph.leaves();
  std::vector<TaskId> perm = tasks;
  std::sort(perm.begin(), perm.end());
  do {
    int prev = -1;
    for (int j = 0; j < k; ++j) {
      const int v = static_cast<int>(g.num_nodes());
      g.tasks.push_back(perm[static_cast<std::size_t>(j)]);
      g.depth.push_back(levels + j);
      if (j == 0) {
        for (int leaf : leaves) g.edges.emplace_back(leaf, v);
      } else {
        g.edges.emplace_back(prev, v);
      }
      prev = v;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return g;
}

std::uint64_t count_paths(const TaskGraph& g) {
  if (g.empty()) return 0;
  // Nodes were appended level by level, so ids are already topologically
  // ordered; count paths ending at each node.
  std::vector<std::uint64_t> ways(g.num_nodes(), 0);
  const auto indeg = in_degree(g);
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    if (indeg[i] == 0) ways[i] = 1;
  for (const auto& [u, v] : g.edges)
    ways[static_cast<std::size_t>(v)] += ways[static_cast<std::size_t>(u)];
  std::uint64_t total = 0;
  const auto outdeg = out_degree(g);
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    if (outdeg[i] == 0) total += ways[i];
  return total;
}

std::vector<TaskSeq> enumerate_optimal(const TaskGraph& graph) {
  if (graph.empty()) throw std::invalid_argument("enumerate_optimal: empty graph");
  const int len = graph.leaf_depth() + 1;  // throws on mixed leaf depths

  std::vector<std::vector<int>> adj(graph.num_nodes());
  for (const auto& [u, v] : graph.edges) adj[static_cast<std::size_t>(u)].push_back(v);
  const auto outdeg = out_degree(graph);

  std::set<TaskSeq> found;
  std::vector<int> stack;
  TaskSeq current;
  for (int root : graph.roots()) {
    // Iterative DFS carrying the task prefix.
    struct Frame { int node; std::size_t next; };
    std::vector<Frame> frames{{root, 0}};
    current.clear();
    current.push_back(graph.tasks[static_cast<std::size_t>(root)]);
    while (!frames.empty()) {
      Frame& f = frames.back();
      const auto node = static_cast<std::size_t>(f.node);
      if (outdeg[node] == 0 && f.next == 0) {
        if (static_cast<int>(current.size()) != len)
          throw std::runtime_error("enumerate_optimal: path shorter than leaf depth");
        found.insert(current);
      }
      if (f.next < adj[node].size()) {
        const int child = adj[node][f.next++];
        frames.push_back({child, 0});
        current.push_back(graph.tasks[static_cast<std::size_t>(child)]);
      } else {
        frames.pop_back();
        current.pop_back();
      }
    }
  }
  return {found.begin(), found.end()};  // std::set iterates lexicographically
}

TaskGraph trie_from_sequences(const std::vector<TaskSeq>& sequences) {
  if (sequences.empty())
    throw std::invalid_argument("trie_from_sequences: empty sequence set");
  const std::size_t len = sequences.front().size();
  for (const auto& s : sequences)
    if (s.size() != len)
      throw std::invalid_argument("trie_from_sequences: ragged sequence lengths");
  if (len == 0)
    throw std::invalid_argument("trie_from_sequences: zero-length sequences");

  TaskGraph g;
  std::map<TaskSeq, int> prefix_node;  // distinct prefix -> node id
  for (const auto& s : sequences) {
    int parent = -1;
    TaskSeq prefix;
    for (TaskId t : s) {
      prefix.push_back(t);
      auto it = prefix_node.find(prefix);
      int node;
      if (it == prefix_node.end()) {
        node = static_cast<int>(g.num_nodes());
        g.tasks.push_back(t);
        g.depth.push_back(static_cast<int>(prefix.size()) - 1);
        if (parent >= 0) g.edges.emplace_back(parent, node);
        prefix_node.emplace(prefix, node);
      } else {
        node = it->second;
      }
      parent = node;
    }
  }
  return g;
}

TSProblem sample_problem(const PriorConfig& config, Rng& rng) {
  config.validate();
  constexpr int kMaxRetries = 64;
  // Node-path count above which we resample without enumerating at all.
  constexpr std::uint64_t kPathGuard = 1u << 20;

  const int n = config.num_tasks;
  const int len = config.sequence_length;

  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    TaskGraph g;
    int levels = 0;
    while (levels < len) {
      const int remaining = len - levels;
      const int op = static_cast<int>(rng.uniform_int(0, 2));
      if (op == 0) {
        const auto t = static_cast<TaskId>(rng.uniform_int(0, n - 1));
        g = expand_atomic(g, t, len);
      } else {
        const int k = std::min(config.k_max, remaining);
        const auto idx = rng.sample_distinct(static_cast<std::size_t>(n),
                                             static_cast<std::size_t>(k));
        std::vector<TaskId> tasks(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
          tasks[i] = static_cast<TaskId>(idx[i]);
        g = (op == 1) ? expand_or(g, tasks, len, config.k_max)
                      : expand_and(g, tasks, len);
      }
      levels = g.leaf_depth() + 1;
    }
    if (count_paths(g) > kPathGuard) continue;
    auto optimal = enumerate_optimal(g);
    if (static_cast<int>(optimal.size()) > config.optimal_set_cap) continue;
    TSProblem p;
    p.graph = std::move(g);
    p.optimal = std::move(optimal);
    p.config = config;
    return p;
  }
  throw std::runtime_error(
      "sample_problem: retry budget exhausted (64 attempts); optimal_set_cap=" +
      std::to_string(config.optimal_set_cap) +
      " too tight for N=" + std::to_string(n) + ", L=" + std::to_string(len));
}

}  // namespace taskseq
