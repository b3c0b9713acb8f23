#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "taskseq/context.hpp"
#include "taskseq/optim.hpp"
#include "taskseq/prior.hpp"
#include "taskseq/utility.hpp"

namespace taskseq {

/// Common proposer contract for the evaluation protocol. observe() is called
/// exactly once per labeled sequence, including the initial context.
struct Strategy {
  virtual ~Strategy() = default;
  virtual TaskSeq propose(Rng& rng) = 0;
  virtual void observe(const TaskSeq& seq, const UtilityVector& u) = 0;
  virtual std::string name() const = 0;
};

// ---- random ----------------------------------------------------------

TaskSeq random_propose(int num_tasks, int seq_len, Rng& rng);

class RandomStrategy final : public Strategy {
 public:
  RandomStrategy(int num_tasks, int seq_len) : n_(num_tasks), l_(seq_len) {}
  TaskSeq propose(Rng& rng) override { return random_propose(n_, l_, rng); }
  void observe(const TaskSeq&, const UtilityVector&) override {}
  std::string name() const override { return "random"; }

 private:
  int n_, l_;
};

// ---- rule-based ------------------------------------------------------

/// Lock/prune state: locked_prefix is a proven-optimal prefix (its prefix
/// utilities were all exactly 1); candidates holds the tasks still viable
/// at the next position.
struct RuleState {
  TaskSeq locked_prefix;
  std::set<TaskId> candidates;
};

TaskSeq rule_propose(const RuleState& state, int num_tasks, int seq_len, Rng& rng);
void rule_observe(RuleState& state, const TaskSeq& seq, const UtilityVector& u,
                  int num_tasks);

class RuleStrategy final : public Strategy {
 public:
  RuleStrategy(int num_tasks, int seq_len);
  TaskSeq propose(Rng& rng) override;
  void observe(const TaskSeq& seq, const UtilityVector& u) override;
  std::string name() const override { return "rule"; }
  const RuleState& state() const { return state_; }

 private:
  RuleState state_;
  int n_, l_;
};

// ---- DDQN ------------------------------------------------------------

struct DdqnConfig {
  std::vector<int> hidden_sizes{64, 64};
  double lr = 1e-3;
  int batch_size = 32;
  int buffer_capacity = 10000;
  int sync_every = 100;           // target-network refresh period (updates)
  double eps_start = 1.0;
  double eps_end = 0.05;
  int total_proposals = 32;       // horizon of the linear epsilon decay
  double gamma = 1.0;
  int prefill_updates = 128;      // training burst before the first proposal
  int updates_per_observe = 16;
  bool terminal_reward_only = false;
  std::uint64_t seed = 0;
};

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void add(Transition t);  // FIFO eviction once full
  const Transition& sample(Rng& rng) const;
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

/// r + gamma * Q_target(s', argmax_a Q_online(s', a)), zero bootstrap on done.
double double_q_target(double reward, bool done, std::span<const double> q_online_next,
                       std::span<const double> q_target_next, double gamma);

/// Builds a sequence position by position: with probability eps a uniform
/// task, otherwise the argmax of q_values over the encoded prefix.
TaskSeq epsilon_greedy_rollout(
    int num_tasks, int seq_len, double eps, Rng& rng,
    const std::function<std::vector<double>(const TaskSeq& prefix)>& q_values);

/// Plain MLP with SiLU activations, used for the online and target Q-networks.
class Mlp {
 public:
  Mlp(int in, const std::vector<int>& hidden, int out, std::uint64_t seed);
  Tensor forward(const Tensor& x) const;  // (B, in) -> (B, out)
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  void copy_from(const Mlp& other);

 private:
  std::vector<Parameter> params_;
  std::size_t layers_ = 0;
};

class DdqnStrategy final : public Strategy {
 public:
  DdqnStrategy(int num_tasks, int seq_len, DdqnConfig cfg);
  TaskSeq propose(Rng& rng) override;
  void observe(const TaskSeq& seq, const UtilityVector& u) override;
  std::string name() const override { return "ddqn"; }

  const ReplayBuffer& buffer() const { return buffer_; }
  const Mlp& online_net() const { return online_; }
  const Mlp& target_net() const { return target_; }
  std::size_t updates() const { return updates_; }
  std::size_t skipped_updates() const { return skipped_updates_; }
  /// Observed-prefix feature vector: (id+1)/(N+1) per filled slot plus t/L.
  std::vector<double> encode_state(const TaskSeq& prefix) const;

 private:
  void train_updates(int count);

  int n_, l_;
  DdqnConfig cfg_;
  Mlp online_, target_;
  ReplayBuffer buffer_;
  AdamW opt_;
  Rng rng_;  // internal stream for replay sampling and exploration noise
  std::size_t updates_ = 0;
  std::size_t skipped_updates_ = 0;
  int proposals_made_ = 0;
  bool warmed_ = false;
};

}  // namespace taskseq
