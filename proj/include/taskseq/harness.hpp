#pragma once

#include <string>
#include <vector>

#include "taskseq/baselines.hpp"
#include "taskseq/model.hpp"
#include "taskseq/prior.hpp"
#include "taskseq/utility.hpp"

namespace taskseq {

struct TraceStep {
  TaskSeq proposed;
  UtilityVector utility;
  double u_bar = 0.0;
  double best_u_bar = 0.0;  // running max including the initial context
  double proposal_seconds = 0.0;
};

struct Trace {
  std::string problem_id;
  std::string method;
  double initial_best = 0.0;  // best scalar utility over the initial context
  std::vector<TraceStep> steps;
  bool partial = false;       // a strategy failure aborted the run
  std::string error;

  /// Best-so-far after `iteration` proposals (0 = initial context only).
  double best_at(int iteration) const;
};

/// Runs the iterative protocol: label and feed `init_context_size` random
/// sequences, then propose -> label -> observe for `iterations` rounds.
/// proposal_seconds times only the propose() call.
Trace run_protocol(const TSProblem& problem, Strategy& strategy, int iterations,
                   int init_context_size, Rng& rng, double alpha = kDefaultAlpha);

/// Frozen-model proposer. Keeps every observation and feeds the model the
/// top `context_cap` sequences by scalar utility (ties by arrival order).
class PftsnStrategy final : public Strategy {
 public:
  PftsnStrategy(const Pftsn* model, double temperature, bool greedy, int context_cap);
  TaskSeq propose(Rng& rng) override;
  void observe(const TaskSeq& seq, const UtilityVector& u) override;
  std::string name() const override { return "pftsn"; }
  ContextBatch current_context() const;

 private:
  const Pftsn* model_;
  double temperature_;
  bool greedy_;
  int cap_;
  std::vector<LabeledSequence> observed_;
  std::vector<double> scores_;
};

struct RankTable {
  std::vector<std::string> methods;
  std::vector<int> checkpoint_iterations;           // e.g. {8, 16, 32}
  std::vector<double> checkpoint_fractions;         // e.g. {0.25, 0.5, 1.0}
  std::vector<std::string> problem_ids;
  // ranks[c][p][m]: rank of method m on problem p at checkpoint c (1 = best,
  // average on ties)
  std::vector<std::vector<std::vector<double>>> ranks;
  std::vector<std::vector<double>> mean_ranks;      // [c][m]
};

/// Ranks methods per problem by best-so-far utility at 25/50/100% of the
/// iteration budget (configurable), averaging tied ranks.
RankTable aggregate_ranks(const std::vector<std::vector<Trace>>& traces_by_method,
                          const std::vector<double>& fractions = {0.25, 0.5, 1.0});

struct CurvePoint {
  int iteration = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

/// Per-iteration mean and (population) std of best-so-far across problems.
std::vector<CurvePoint> curve_export(const std::vector<Trace>& traces);

/// Sequence-execution cost at which two methods' total runtimes coincide:
/// x = (t1 - t2) / (n2 - n1). Throws when n1 == n2.
double break_even(double n1, double t1, double n2, double t2);

/// One-sided exact sign test: probability of >= wins successes out of
/// wins + losses fair coin flips (ties excluded by the caller).
double sign_test_p(int wins, int losses);

}  // namespace taskseq
