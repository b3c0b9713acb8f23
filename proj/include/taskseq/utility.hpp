#pragma once

#include <vector>

#include "taskseq/prior.hpp"

namespace taskseq {

/// Per-prefix utilities U_1..U_L, each in (0, 1]; U_k = 1 exactly when the
/// k-prefix matches some optimal k-prefix.
using UtilityVector = std::vector<double>;

inline constexpr double kDefaultAlpha = 0.5;

/// Number of positions at which equal-length sequences differ.
int hamming(const TaskSeq& a, const TaskSeq& b);

/// Warping distance under unit mismatch cost, full-alignment boundary
/// (W(0,0)=0, borders +inf).
int dtw(const TaskSeq& a, const TaskSeq& b);

/// Diagonal (W(1,1), ..., W(L,L)) of one DP table; entry k equals
/// dtw(a[0..k), b[0..k)).
std::vector<int> dtw_prefix_diagonal(const TaskSeq& a, const TaskSeq& b);

/// alpha/(1+DTW) + (1-alpha)/(1+Hamming), in (0, 1].
double similarity(const TaskSeq& a, const TaskSeq& b, double alpha = kDefaultAlpha);

/// U_k = max over optimal sequences of similarity between k-prefixes.
UtilityVector utility_vector(const TaskSeq& tau, const std::vector<TaskSeq>& optimal,
                             double alpha = kDefaultAlpha);

/// Sum of the prefix utilities; equals L exactly when tau is optimal.
double scalar_utility(const UtilityVector& u);

}  // namespace taskseq
