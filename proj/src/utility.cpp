#include "taskseq/utility.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace taskseq {

namespace {
constexpr int kInf = std::numeric_limits<int>::max() / 4;
}

int hamming(const TaskSeq& a, const TaskSeq& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("hamming: length mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]);
  return d;
}

std::vector<int> dtw_prefix_diagonal(const TaskSeq& a, const TaskSeq& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dtw_prefix_diagonal: length mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  if (a.empty()) throw std::invalid_argument("dtw_prefix_diagonal: empty sequence");
  const std::size_t n = a.size();
  // Rolling rows of the (n+1)x(n+1) table.
  std::vector<int> prev(n + 1, kInf), curr(n + 1, kInf);
  prev[0] = 0;
  std::vector<int> diag(n, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    curr[0] = kInf;
    for (std::size_t j = 1; j <= n; ++j) {
      const int cost = (a[i - 1] != b[j - 1]);
      curr[j] = cost + std::min({prev[j - 1], prev[j], curr[j - 1]});
    }
    diag[i - 1] = curr[i];
    std::swap(prev, curr);
  }
  return diag;
}

int dtw(const TaskSeq& a, const TaskSeq& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw: empty sequence");
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, kInf), curr(m + 1, kInf);
  prev[0] = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    curr[0] = kInf;
    for (std::size_t j = 1; j <= m; ++j) {
      const int cost = (a[i - 1] != b[j - 1]);
      curr[j] = cost + std::min({prev[j - 1], prev[j], curr[j - 1]});
    }
    std::swap(prev, curr);
  }
  return prev[m];
}

double similarity(const TaskSeq& a, const TaskSeq& b, double alpha) {
  const int dw = dtw(a, b);
  const int dh = hamming(a, b);
  return alpha / (1.0 + dw) + (1.0 - alpha) / (1.0 + dh);
}

UtilityVector utility_vector(const TaskSeq& tau, const std::vector<TaskSeq>& optimal,
                             double alpha) {
  if (optimal.empty()) throw std::invalid_argument("utility_vector: empty optimal set");
  const std::size_t len = tau.size();
  for (const auto& opt : optimal)
    if (opt.size() != len)
      throw std::invalid_argument("utility_vector: optimal length mismatch (" +
                                  std::to_string(opt.size()) + " vs " +
                                  std::to_string(len) + ")");
  if (len == 0) throw std::invalid_argument("utility_vector: empty sequence");

  // Value of sim at an exact prefix match (both distances zero); the
  // expression mirrors the general path so results stay bit-identical.
  const double match_sim = alpha / 1.0 + (1.0 - alpha) / 1.0;

  UtilityVector best(len, 0.0);
  for (const auto& opt : optimal) {
    if (tau == opt) {  // exact member: every prefix utility is maximal
      std::fill(best.begin(), best.end(), match_sim);
      return best;
    }
    const auto diag = dtw_prefix_diagonal(tau, opt);
    int cum_ham = 0;
    bool saturated = true;
    for (std::size_t k = 0; k < len; ++k) {
      cum_ham += (tau[k] != opt[k]);
      const double sim =
          alpha / (1.0 + diag[k]) + (1.0 - alpha) / (1.0 + cum_ham);
      best[k] = std::max(best[k], sim);
      saturated = saturated && best[k] == match_sim;
    }
    if (saturated) return best;
  }
  return best;
}

double scalar_utility(const UtilityVector& u) {
  return std::accumulate(u.begin(), u.end(), 0.0);
}

}  // namespace taskseq
