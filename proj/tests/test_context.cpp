#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "taskseq/context.hpp"

using namespace taskseq;

namespace {

TSProblem make_problem(int n = 8, int l = 8, std::uint64_t seed = 5) {
  PriorConfig cfg;
  cfg.num_tasks = n;
  cfg.sequence_length = l;
  Rng rng(seed);
  return sample_problem(cfg, rng);
}

}  // namespace

TEST_CASE("sample_random shapes and degenerate alphabet") {
  Rng rng(1);
  CHECK(sample_random(0, 4, 4, rng).empty());
  const auto seqs = sample_random(16, 8, 8, rng);
  CHECK(seqs.size() == 16);
  for (const auto& s : seqs) {
    CHECK(s.size() == 8);
    for (TaskId t : s) {
      CHECK(t >= 0);
      CHECK(t < 8);
    }
  }
  for (const auto& s : sample_random(5, 1, 6, rng))
    CHECK(s == TaskSeq(6, 0));
}

TEST_CASE("mutate preserves an optimal prefix of at least floor(L/2)") {
  const auto p = make_problem();
  Rng rng(2);
  const std::set<TaskSeq> members(p.optimal.begin(), p.optimal.end());
  for (int i = 0; i < 500; ++i) {
    const auto m = mutate(p.optimal, p.config.num_tasks, rng);
    REQUIRE(!m.exhausted);
    CHECK(m.tasks.size() == 8);
    CHECK(m.preserved_prefix >= 4);
    CHECK(m.preserved_prefix <= 7);
    const auto& src = p.optimal[m.source_index];
    for (int k = 0; k < m.preserved_prefix; ++k)
      CHECK(m.tasks[static_cast<std::size_t>(k)] == src[static_cast<std::size_t>(k)]);
    CHECK(members.find(m.tasks) == members.end());
    // preserved prefix scores all-ones against its source alone
    const auto u = utility_vector(m.tasks, {src});
    for (int k = 0; k < m.preserved_prefix; ++k)
      CHECK(u[static_cast<std::size_t>(k)] == 1.0);
  }
}

TEST_CASE("mutate at L = 2 with a forced single-position suffix") {
  const std::vector<TaskSeq> optimal{{0, 1}};
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto m = mutate(optimal, 4, rng);
    REQUIRE(!m.exhausted);
    CHECK(m.preserved_prefix == 1);
    CHECK(m.tasks[0] == 0);
    CHECK(m.tasks[1] != 1);
    CHECK(hamming(m.tasks, optimal[0]) == 1);
  }
}

TEST_CASE("mutate flags exhaustion when every completion is optimal") {
  // S* = T^L for N = 2, L = 2: nothing non-optimal exists
  const std::vector<TaskSeq> optimal{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  Rng rng(4);
  const auto m = mutate(optimal, 2, rng);
  CHECK(m.exhausted);
}

TEST_CASE("mix_context follows the adaptive mixing formula") {
  CHECK(mix_context(4, 4, 16) == std::pair<int, int>{4, 0});
  CHECK(mix_context(16, 4, 16) == std::pair<int, int>{0, 16});
  CHECK(mix_context(10, 4, 16) == std::pair<int, int>{5, 5});
  for (int c = 4; c <= 16; ++c) {
    const auto [r, m] = mix_context(c, 4, 16);
    CHECK(r + m == c);
    CHECK(r >= 0);
    CHECK(m >= 0);
  }
  CHECK_THROWS_AS(mix_context(4, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(mix_context(3, 4, 16), std::invalid_argument);
}

TEST_CASE("mutated share grows with the context size") {
  const auto p = make_problem();
  Rng rng(6);
  double mean_low = 0.0, mean_high = 0.0;
  const int reps = 2000;
  for (int i = 0; i < reps; ++i) {
    const auto low = build_training_context(p, 5, 4, 16, 0.5, rng);
    const auto high = build_training_context(p, 15, 4, 16, 0.5, rng);
    auto frac = [](const ContextBatch& b) {
      int mut = 0;
      for (const auto& s : b.sequences) mut += (s.source == SequenceSource::mutated);
      return static_cast<double>(mut) / static_cast<double>(b.sequences.size());
    };
    mean_low += frac(low);
    mean_high += frac(high);
  }
  CHECK(mean_high / reps > mean_low / reps);
}

TEST_CASE("training contexts are sized, non-optimal, and reproducible") {
  const auto p = make_problem();
  const std::set<TaskSeq> members(p.optimal.begin(), p.optimal.end());
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) {
    const auto ca = build_training_context(p, 4, 16, 0.5, a);
    const auto cb = build_training_context(p, 4, 16, 0.5, b);
    CHECK(ca.sequences.size() >= 4);
    CHECK(ca.sequences.size() <= 16);
    REQUIRE(ca.sequences.size() == cb.sequences.size());
    for (std::size_t j = 0; j < ca.sequences.size(); ++j) {
      CHECK(ca.sequences[j].tasks == cb.sequences[j].tasks);
      CHECK(ca.sequences[j].utility == cb.sequences[j].utility);
      CHECK(members.find(ca.sequences[j].tasks) == members.end());
      CHECK(scalar_utility(ca.sequences[j].utility) < 8.0);
    }
  }
}

TEST_CASE("pinned c_min = c_max yields all-random contexts") {
  const auto p = make_problem();
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const auto ctx = build_training_context(p, 4, 4, 16, 0.5, rng);
    CHECK(ctx.sequences.size() == 4);
    for (const auto& s : ctx.sequences) CHECK(s.source == SequenceSource::random);
  }
}
