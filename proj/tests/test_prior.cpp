#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "taskseq/prior.hpp"

using namespace taskseq;

namespace {

PriorConfig small_config(int n = 3, int l = 3, int k_max = 2) {
  PriorConfig c;
  c.num_tasks = n;
  c.sequence_length = l;
  c.k_max = k_max;
  return c;
}

}  // namespace

TEST_CASE("expand_atomic on the empty graph creates a single root") {
  TaskGraph g = expand_atomic({}, 2, 3);
  CHECK(g.num_nodes() == 1);
  CHECK(g.tasks[0] == 2);
  CHECK(g.edges.empty());
  CHECK(g.roots() == std::vector<int>{0});
  CHECK(g.leaves() == std::vector<int>{0});
}

TEST_CASE("expand_atomic merges all leaves into one shared node") {
  TaskGraph g = expand_or({}, {0, 1}, 3, 2);  // two roots
  g = expand_atomic(g, 1, 3);
  CHECK(g.num_nodes() == 3);
  CHECK(g.leaves() == std::vector<int>{2});
  CHECK(g.edges.size() == 2);  // one edge from each former leaf
}

TEST_CASE("repeated atomic expansion with one task builds a repeated path") {
  TaskGraph g = expand_atomic({}, 5, 8);
  g = expand_atomic(g, 5, 8);
  CHECK(g.num_nodes() == 2);
  CHECK(g.tasks == std::vector<TaskId>{5, 5});
  CHECK(g.depth == std::vector<int>{0, 1});
  CHECK(enumerate_optimal(g) == std::vector<TaskSeq>{{5, 5}});
}

TEST_CASE("expand_atomic rejects a depth overflow") {
  TaskGraph g = expand_atomic({}, 0, 1);
  CHECK_THROWS_AS(expand_atomic(g, 1, 1), std::invalid_argument);
}

TEST_CASE("expand_or on the empty graph creates parallel roots") {
  TaskGraph g = expand_or({}, {2, 3}, 3, 2);
  CHECK(g.num_nodes() == 2);
  CHECK(g.roots().size() == 2);
  CHECK(g.leaves().size() == 2);
}

TEST_CASE("expand_or with one task degenerates to atomic") {
  TaskGraph base = expand_atomic({}, 4, 3);
  TaskGraph a = expand_or(base, {0}, 3, 2);
  TaskGraph b = expand_atomic(base, 0, 3);
  CHECK(a.tasks == b.tasks);
  CHECK(a.edges == b.edges);
  CHECK(a.depth == b.depth);
}

TEST_CASE("expand_or adds |leaves| * k edges") {
  TaskGraph g = expand_or({}, {0, 5}, 3, 2);  // two leaves
  g = expand_or(g, {1, 4}, 3, 6);
  CHECK(g.num_nodes() == 4);
  CHECK(g.edges.size() == 4);
  CHECK(g.leaves().size() == 2);
}

TEST_CASE("expand_or rejects duplicate tasks") {
  CHECK_THROWS_AS(expand_or({}, {1, 1}, 3, 2), std::invalid_argument);
}

TEST_CASE("expand_and appends one path per permutation") {
  TaskGraph g = expand_atomic({}, 2, 3);
  g = expand_and(g, {1, 3}, 3);
  CHECK(g.num_nodes() == 5);
  const auto opt = enumerate_optimal(g);
  CHECK(opt == std::vector<TaskSeq>{{2, 1, 3}, {2, 3, 1}});
}

TEST_CASE("expand_and with one task equals atomic") {
  TaskGraph base = expand_atomic({}, 0, 4);
  TaskGraph a = expand_and(base, {7}, 4);
  TaskGraph b = expand_atomic(base, 7, 4);
  CHECK(a.tasks == b.tasks);
  CHECK(a.edges == b.edges);
}

TEST_CASE("expand_and on the empty graph enumerates both orders") {
  TaskGraph g = expand_and({}, {0, 1}, 2);
  const auto opt = enumerate_optimal(g);
  CHECK(opt == std::vector<TaskSeq>{{0, 1}, {1, 0}});
}

TEST_CASE("expand_and rejects a depth overflow") {
  TaskGraph g = expand_atomic({}, 0, 2);
  CHECK_THROWS_AS(expand_and(g, {1, 2}, 2), std::invalid_argument);
}

TEST_CASE("enumerate_optimal on the worked two-op example") {
  // atomic t2 then and {t1, t3} at L = 3
  TaskGraph g = expand_atomic({}, 2, 3);
  g = expand_and(g, {1, 3}, 3);
  CHECK(enumerate_optimal(g) == std::vector<TaskSeq>{{2, 1, 3}, {2, 3, 1}});
}

TEST_CASE("enumerate_optimal on the or-then-atomic example") {
  TaskGraph g = expand_or({}, {2, 3}, 3, 2);
  g = expand_atomic(g, 1, 3);
  g = expand_atomic(g, 1, 3);
  CHECK(enumerate_optimal(g) == std::vector<TaskSeq>{{2, 1, 1}, {3, 1, 1}});
}

TEST_CASE("enumerate_optimal walks a diamond with a shared sink") {
  TaskGraph g = expand_atomic({}, 0, 3);
  g = expand_or(g, {1, 2}, 3, 2);
  g = expand_atomic(g, 3, 3);
  CHECK(enumerate_optimal(g) == std::vector<TaskSeq>{{0, 1, 3}, {0, 2, 3}});
}

TEST_CASE("enumerate_optimal rejects ragged path lengths") {
  TaskGraph g;
  g.tasks = {0, 1, 2};
  g.depth = {0, 1, 0};
  g.edges = {{0, 1}};  // node 2 is an isolated root-leaf at depth 0
  CHECK_THROWS(enumerate_optimal(g));
}

TEST_CASE("trie over two disjoint sequences is a two-root forest") {
  const std::vector<TaskSeq> s{{0, 1}, {2, 3}};
  TaskGraph g = trie_from_sequences(s);
  CHECK(g.num_nodes() == 4);
  CHECK(g.roots().size() == 2);
  CHECK(enumerate_optimal(g) == s);
}

TEST_CASE("trie does not recombine across shared interior tasks") {
  // {(a,x,b), (c,x,d)} must not admit (a,x,d)
  const TaskSeq axb{0, 1, 2}, cxd{3, 1, 4};
  TaskGraph g = trie_from_sequences({axb, cxd});
  const auto paths = enumerate_optimal(g);
  CHECK(paths == std::vector<TaskSeq>{axb, cxd});
  CHECK(std::find(paths.begin(), paths.end(), TaskSeq{0, 1, 4}) == paths.end());
  // two distinct nodes carry task x
  int x_nodes = 0;
  for (TaskId t : g.tasks) x_nodes += (t == 1);
  CHECK(x_nodes == 2);
}

TEST_CASE("trie rejects ragged and empty input") {
  CHECK_THROWS_AS(trie_from_sequences({{0, 1}, {2}}), std::invalid_argument);
  CHECK_THROWS_AS(trie_from_sequences({}), std::invalid_argument);
}

TEST_CASE("trie round-trips sampled optimal sets") {
  PriorConfig cfg = small_config(8, 8);
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    const auto p = sample_problem(cfg, rng);
    CHECK(enumerate_optimal(trie_from_sequences(p.optimal)) == p.optimal);
  }
}

TEST_CASE("sample_problem produces layered graphs of uniform length") {
  for (int l : {7, 8}) {  // odd and even lengths exercise and-op clamping
    PriorConfig cfg = small_config(8, l);
    Rng rng(41 + l);
    for (int i = 0; i < 200; ++i) {
      const auto p = sample_problem(cfg, rng);
      p.graph.validate();
      CHECK(!p.optimal.empty());
      CHECK(static_cast<int>(p.optimal.size()) <= cfg.optimal_set_cap);
      for (const auto& s : p.optimal)
        CHECK(s.size() == static_cast<std::size_t>(l));
      CHECK(std::set<TaskSeq>(p.optimal.begin(), p.optimal.end()).size() ==
            p.optimal.size());
      for (const auto& [u, v] : p.graph.edges)
        CHECK(p.graph.depth[static_cast<std::size_t>(v)] ==
              p.graph.depth[static_cast<std::size_t>(u)] + 1);
    }
  }
}

TEST_CASE("sample_problem with L = 1 yields single-task sequences") {
  PriorConfig cfg = small_config(4, 1);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto p = sample_problem(cfg, rng);
    for (const auto& s : p.optimal) CHECK(s.size() == 1);
  }
}

TEST_CASE("sample_problem is deterministic per (config, seed)") {
  PriorConfig cfg = small_config(8, 8);
  Rng a(99), b(99);
  for (int i = 0; i < 20; ++i) {
    const auto pa = sample_problem(cfg, a);
    const auto pb = sample_problem(cfg, b);
    CHECK(pa.graph.tasks == pb.graph.tasks);
    CHECK(pa.graph.edges == pb.graph.edges);
    CHECK(pa.optimal == pb.optimal);
  }
}

TEST_CASE("sample_problem reports exhaustion under an impossible cap") {
  PriorConfig cfg = small_config(8, 8);
  cfg.optimal_set_cap = 1;  // almost every draw has |S*| > 1
  Rng rng(1);
  bool threw = false;
  try {
    for (int i = 0; i < 50; ++i) (void)sample_problem(cfg, rng);
  } catch (const std::runtime_error&) {
    threw = true;
  }
  CHECK(threw);
}

TEST_CASE("PriorConfig validation") {
  CHECK_THROWS_AS(small_config(1, 3).validate(), std::invalid_argument);
  CHECK_THROWS_AS(small_config(3, 0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(small_config(3, 3, 4).validate(), std::invalid_argument);
  PriorConfig bad = small_config();
  bad.optimal_set_cap = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
