#include "taskseq/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace taskseq {

double Trace::best_at(int iteration) const {
  if (iteration <= 0 || steps.empty()) return initial_best;
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(iteration),
                                         steps.size());
  return steps[idx - 1].best_u_bar;
}

Trace run_protocol(const TSProblem& problem, Strategy& strategy, int iterations,
                   int init_context_size, Rng& rng, double alpha) {
  if (iterations < 1) throw std::invalid_argument("run_protocol: iterations must be >= 1");
  if (init_context_size < 0)
    throw std::invalid_argument("run_protocol: negative init context size");

  Trace trace;
  trace.problem_id = problem.problem_id;
  trace.method = strategy.name();

  const auto& cfg = problem.config;
  double best = 0.0;
  try {
    for (int i = 0; i < init_context_size; ++i) {
      TaskSeq seq = sample_random(1, cfg.num_tasks, cfg.sequence_length, rng).front();
      UtilityVector u = utility_vector(seq, problem.optimal, alpha);
      best = std::max(best, scalar_utility(u));
      strategy.observe(seq, u);
    }
    trace.initial_best = best;

    using Clock = std::chrono::steady_clock;
    for (int it = 0; it < iterations; ++it) {
      const auto t0 = Clock::now();
      TaskSeq seq = strategy.propose(rng);
      const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

      TraceStep step;
      step.proposed = std::move(seq);
      step.utility = utility_vector(step.proposed, problem.optimal, alpha);
      step.u_bar = scalar_utility(step.utility);
      best = std::max(best, step.u_bar);
      step.best_u_bar = best;
      step.proposal_seconds = secs;
      strategy.observe(step.proposed, step.utility);
      trace.steps.push_back(std::move(step));
    }
  } catch (const std::exception& e) {
    trace.partial = true;
    trace.error = e.what();
  }
  return trace;
}

PftsnStrategy::PftsnStrategy(const Pftsn* model, double temperature, bool greedy,
                             int context_cap)
    : model_(model), temperature_(temperature), greedy_(greedy), cap_(context_cap) {
  if (!model) throw std::invalid_argument("PftsnStrategy: null model");
  if (context_cap < 1) throw std::invalid_argument("PftsnStrategy: context_cap < 1");
}

void PftsnStrategy::observe(const TaskSeq& seq, const UtilityVector& u) {
  LabeledSequence ls;
  ls.tasks = seq;
  ls.utility = u;
  ls.source = SequenceSource::proposed;
  scores_.push_back(scalar_utility(u));
  observed_.push_back(std::move(ls));
}

ContextBatch PftsnStrategy::current_context() const {
  if (observed_.empty())
    throw std::logic_error("PftsnStrategy: no observations to build a context from");
  std::vector<std::size_t> order(observed_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores_[a] > scores_[b];
  });
  const auto keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(cap_));
  order.resize(keep);
  std::sort(order.begin(), order.end());  // arrival order inside the context

  ContextBatch ctx;
  ctx.c_min = 1;
  ctx.c_max = cap_;
  for (auto i : order) ctx.sequences.push_back(observed_[i]);
  return ctx;
}

TaskSeq PftsnStrategy::propose(Rng& rng) {
  return model_->generate(current_context(), temperature_, rng, greedy_);
}

namespace {

// ranks of scores, highest first, average on ties
std::vector<double> rank_scores(const std::vector<double>& scores) {
  const std::size_t m = scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> ranks(m, 0.0);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

RankTable aggregate_ranks(const std::vector<std::vector<Trace>>& traces_by_method,
                          const std::vector<double>& fractions) {
  if (traces_by_method.size() < 2)
    throw std::invalid_argument("aggregate_ranks: need at least two methods");
  const std::size_t num_methods = traces_by_method.size();

  RankTable table;
  int iterations = 0;
  std::map<std::string, std::vector<const Trace*>> by_problem;
  for (std::size_t m = 0; m < num_methods; ++m) {
    const auto& traces = traces_by_method[m];
    if (traces.empty())
      throw std::invalid_argument("aggregate_ranks: empty trace list for a method");
    table.methods.push_back(traces.front().method);
    for (const auto& t : traces) {
      auto& slot = by_problem[t.problem_id];
      if (slot.size() != m)
        throw std::invalid_argument("aggregate_ranks: mismatched problem suites (" +
                                    t.problem_id + ")");
      slot.push_back(&t);
      iterations = std::max(iterations, static_cast<int>(t.steps.size()));
    }
  }
  for (const auto& [id, slot] : by_problem)
    if (slot.size() != num_methods)
      throw std::invalid_argument("aggregate_ranks: problem " + id +
                                  " missing from some method");

  for (double f : fractions) {
    const int it = std::max(1, static_cast<int>(std::llround(f * iterations)));
    table.checkpoint_iterations.push_back(it);
    table.checkpoint_fractions.push_back(f);
  }

  table.ranks.assign(fractions.size(), {});
  table.mean_ranks.assign(fractions.size(), std::vector<double>(num_methods, 0.0));
  for (const auto& [id, slot] : by_problem) {
    table.problem_ids.push_back(id);
    for (std::size_t c = 0; c < fractions.size(); ++c) {
      std::vector<double> scores(num_methods);
      for (std::size_t m = 0; m < num_methods; ++m)
        scores[m] = slot[m]->best_at(table.checkpoint_iterations[c]);
      auto ranks = rank_scores(scores);
      for (std::size_t m = 0; m < num_methods; ++m)
        table.mean_ranks[c][m] += ranks[m];
      table.ranks[c].push_back(std::move(ranks));
    }
  }
  const auto num_problems = static_cast<double>(table.problem_ids.size());
  for (auto& row : table.mean_ranks)
    for (auto& v : row) v /= num_problems;
  return table;
}

std::vector<CurvePoint> curve_export(const std::vector<Trace>& traces) {
  if (traces.empty()) throw std::invalid_argument("curve_export: no traces");
  std::size_t iterations = 0;
  for (const auto& t : traces) iterations = std::max(iterations, t.steps.size());

  std::vector<CurvePoint> curve;
  for (std::size_t it = 1; it <= iterations; ++it) {
    CurvePoint pt;
    pt.iteration = static_cast<int>(it);
    double sum = 0.0, sq = 0.0;
    for (const auto& t : traces) {
      const double b = t.best_at(static_cast<int>(it));
      sum += b;
      sq += b * b;
      ++pt.count;
    }
    const auto n = static_cast<double>(pt.count);
    pt.mean = sum / n;
    pt.stddev = std::sqrt(std::max(0.0, sq / n - pt.mean * pt.mean));
    curve.push_back(pt);
  }
  return curve;
}

double break_even(double n1, double t1, double n2, double t2) {
  if (n1 == n2)
    throw std::invalid_argument("break_even: undefined for equal iteration counts");
  return (t1 - t2) / (n2 - n1);
}

double sign_test_p(int wins, int losses) {
  if (wins < 0 || losses < 0)
    throw std::invalid_argument("sign_test_p: negative counts");
  const int n = wins + losses;
  if (n == 0) return 1.0;
  // P(X >= wins) for X ~ Binomial(n, 1/2), computed in log space.
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    const double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                        std::lgamma(n - k + 1.0);
    p += std::exp(logc - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

}  // namespace taskseq
