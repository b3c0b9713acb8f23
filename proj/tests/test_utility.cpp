#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "taskseq/prior.hpp"
#include "taskseq/utility.hpp"

using namespace taskseq;

namespace {

// Straight transcription of the warping recursion, used as an oracle.
int dtw_oracle(const TaskSeq& a, const TaskSeq& b) {
  std::map<std::pair<int, int>, int> memo;
  constexpr int inf = 1 << 28;
  auto w = [&](auto&& self, int i, int j) -> int {
    if (i == 0 && j == 0) return 0;
    if (i == 0 || j == 0) return inf;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const int cost = a[static_cast<std::size_t>(i - 1)] != b[static_cast<std::size_t>(j - 1)];
    const int v = cost + std::min({self(self, i - 1, j - 1), self(self, i - 1, j),
                                   self(self, i, j - 1)});
    memo[key] = v;
    return v;
  };
  return w(w, static_cast<int>(a.size()), static_cast<int>(b.size()));
}

// Direct per-prefix evaluation of the utility definition.
UtilityVector utility_oracle(const TaskSeq& tau, const std::vector<TaskSeq>& optimal,
                             double alpha = 0.5) {
  UtilityVector u(tau.size(), 0.0);
  for (std::size_t k = 1; k <= tau.size(); ++k) {
    const TaskSeq prefix(tau.begin(), tau.begin() + static_cast<long>(k));
    double best = 0.0;
    for (const auto& opt : optimal) {
      const TaskSeq opt_prefix(opt.begin(), opt.begin() + static_cast<long>(k));
      best = std::max(best, similarity(prefix, opt_prefix, alpha));
    }
    u[k - 1] = best;
  }
  return u;
}

const TaskSeq kShiftA{1, 4, 3, 1, 3, 0};
const TaskSeq kShiftB{0, 1, 4, 3, 1, 3};

}  // namespace

TEST_CASE("hamming") {
  CHECK(hamming({2, 1, 3}, {2, 1, 3}) == 0);
  CHECK(hamming({2, 1, 1}, {2, 1, 3}) == 1);
  CHECK(hamming(kShiftA, kShiftB) == 6);
  CHECK_THROWS_AS(hamming({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("dtw matches hand-computed tables") {
  CHECK(dtw({4, 4, 4}, {4, 4, 4}) == 0);
  CHECK(dtw(kShiftA, kShiftB) == 2);  // shifted pattern: warping absorbs the offset
  CHECK(dtw({2, 1, 1}, {2, 3, 1}) == 1);
  CHECK_THROWS_AS(dtw({}, {1}), std::invalid_argument);
}

TEST_CASE("dtw agrees with the recursive oracle on random pairs") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto l = static_cast<int>(rng.uniform_int(1, 12));
    TaskSeq a(static_cast<std::size_t>(l)), b(static_cast<std::size_t>(l));
    for (auto& t : a) t = static_cast<TaskId>(rng.uniform_int(0, 5));
    for (auto& t : b) t = static_cast<TaskId>(rng.uniform_int(0, 5));
    CHECK(dtw(a, b) == dtw_oracle(a, b));
  }
}

TEST_CASE("dtw_prefix_diagonal equals per-prefix dtw") {
  CHECK(dtw_prefix_diagonal({3, 1, 2}, {3, 1, 2}) == std::vector<int>{0, 0, 0});
  CHECK(dtw_prefix_diagonal({2, 1, 1}, {2, 1, 3}) == std::vector<int>{0, 0, 1});
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const auto l = static_cast<int>(rng.uniform_int(1, 10));
    TaskSeq a(static_cast<std::size_t>(l)), b(static_cast<std::size_t>(l));
    for (auto& t : a) t = static_cast<TaskId>(rng.uniform_int(0, 4));
    for (auto& t : b) t = static_cast<TaskId>(rng.uniform_int(0, 4));
    const auto diag = dtw_prefix_diagonal(a, b);
    for (int k = 1; k <= l; ++k) {
      const TaskSeq pa(a.begin(), a.begin() + k), pb(b.begin(), b.begin() + k);
      CHECK(diag[static_cast<std::size_t>(k - 1)] == dtw(pa, pb));
    }
  }
  CHECK_THROWS_AS(dtw_prefix_diagonal({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("warping never exceeds the positional distance") {
  Rng rng(17);
  for (int i = 0; i < 10000; ++i) {
    const auto l = static_cast<int>(rng.uniform_int(1, 16));
    TaskSeq a(static_cast<std::size_t>(l)), b(static_cast<std::size_t>(l));
    for (auto& t : a) t = static_cast<TaskId>(rng.uniform_int(0, 7));
    for (auto& t : b) t = static_cast<TaskId>(rng.uniform_int(0, 7));
    CHECK(dtw(a, b) <= hamming(a, b));
  }
}

TEST_CASE("similarity") {
  CHECK(similarity({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(similarity({3}, {5}) == 0.5);
  CHECK(similarity(kShiftA, kShiftB) == doctest::Approx(10.0 / 42.0).epsilon(1e-12));
  // symmetric, and 1 only at equality
  Rng rng(19);
  for (int i = 0; i < 1000; ++i) {
    TaskSeq a(5), b(5);
    for (auto& t : a) t = static_cast<TaskId>(rng.uniform_int(0, 3));
    for (auto& t : b) t = static_cast<TaskId>(rng.uniform_int(0, 3));
    CHECK(similarity(a, b) == similarity(b, a));
    CHECK((similarity(a, b) == 1.0) == (a == b));
  }
}

TEST_CASE("utility_vector on the worked example") {
  const std::vector<TaskSeq> optimal{{2, 1, 3}, {2, 3, 1}};
  const auto u = utility_vector({2, 1, 1}, optimal);
  CHECK(u == UtilityVector{1.0, 1.0, 0.5});
  CHECK(utility_vector({2, 1, 3}, optimal) == UtilityVector{1.0, 1.0, 1.0});
  CHECK_THROWS_AS(utility_vector({1, 2, 3}, {}), std::invalid_argument);
}

TEST_CASE("utility_vector equals the brute-force oracle on all of T^L") {
  PriorConfig cfg;
  cfg.num_tasks = 3;
  cfg.sequence_length = 3;
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = sample_problem(cfg, rng);
    for (int code = 0; code < 27; ++code) {
      TaskSeq tau{static_cast<TaskId>(code / 9), static_cast<TaskId>((code / 3) % 3),
                  static_cast<TaskId>(code % 3)};
      const auto got = utility_vector(tau, p.optimal);
      const auto want = utility_oracle(tau, p.optimal);
      for (std::size_t k = 0; k < 3; ++k) CHECK(got[k] == want[k]);  // bit-exact
    }
  }
}

TEST_CASE("utility is order- and duplicate-invariant in the optimal set") {
  const std::vector<TaskSeq> optimal{{0, 1, 2}, {2, 1, 0}, {1, 1, 1}};
  std::vector<TaskSeq> shuffled{{1, 1, 1}, {0, 1, 2}, {2, 1, 0}};
  std::vector<TaskSeq> duplicated = optimal;
  duplicated.push_back(optimal.front());
  Rng rng(29);
  for (int i = 0; i < 200; ++i) {
    TaskSeq tau(3);
    for (auto& t : tau) t = static_cast<TaskId>(rng.uniform_int(0, 2));
    const auto a = utility_vector(tau, optimal);
    CHECK(a == utility_vector(tau, shuffled));
    CHECK(a == utility_vector(tau, duplicated));
  }
}

TEST_CASE("exact optimal prefixes pin the utility ceiling") {
  const std::vector<TaskSeq> optimal{{0, 1, 2, 3}};
  const auto u = utility_vector({0, 1, 3, 0}, optimal);
  CHECK(u[0] == 1.0);
  CHECK(u[1] == 1.0);
  CHECK(u[2] < 1.0);
  CHECK(u[3] < 1.0);
}

TEST_CASE("scalar_utility") {
  CHECK(scalar_utility({1, 1, 0.5}) == 2.5);
  CHECK(scalar_utility(UtilityVector(8, 1.0)) == 8.0);

  // fully mismatched sequence: both distances equal k at every prefix
  const std::vector<TaskSeq> optimal{{0, 0, 0}};
  const auto u = utility_vector({1, 1, 1}, optimal);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(u[k] == doctest::Approx(1.0 / (2.0 + static_cast<double>(k))).epsilon(1e-15));
  const double floor_value = scalar_utility(u);
  CHECK(floor_value == doctest::Approx(0.5 + 1.0 / 3.0 + 0.25).epsilon(1e-12));
  // brute force: no sequence over T^L scores lower
  for (int code = 0; code < 27; ++code) {
    TaskSeq tau{static_cast<TaskId>(code / 9), static_cast<TaskId>((code / 3) % 3),
                static_cast<TaskId>(code % 3)};
    CHECK(scalar_utility(utility_vector(tau, optimal)) >= floor_value - 1e-15);
  }
}
