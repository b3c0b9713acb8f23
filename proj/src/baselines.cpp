#include "taskseq/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace taskseq {

TaskSeq random_propose(int num_tasks, int seq_len, Rng& rng) {
  return sample_random(1, num_tasks, seq_len, rng).front();
}

// ---- rule-based ------------------------------------------------------

namespace {
std::set<TaskId> all_tasks(int num_tasks) {
  std::set<TaskId> s;
  for (TaskId t = 0; t < num_tasks; ++t) s.insert(t);
  return s;
}
}  // namespace

TaskSeq rule_propose(const RuleState& state, int num_tasks, int seq_len, Rng& rng) {
  const auto locked = static_cast<int>(state.locked_prefix.size());
  TaskSeq out = state.locked_prefix;
  if (locked >= seq_len) return out;
  if (state.candidates.empty())
    throw std::logic_error("rule_propose: empty candidate set");
  std::vector<TaskId> cand(state.candidates.begin(), state.candidates.end());
  out.push_back(cand[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(cand.size()) - 1))]);
  while (static_cast<int>(out.size()) < seq_len)
    out.push_back(static_cast<TaskId>(rng.uniform_int(0, num_tasks - 1)));
  return out;
}

void rule_observe(RuleState& state, const TaskSeq& seq, const UtilityVector& u,
                  int num_tasks) {
  if (seq.size() != u.size())
    throw std::invalid_argument("rule_observe: sequence/utility length mismatch");
  // Longest prefix proven optimal by this observation. u_k == 1 is exact:
  // the similarity hits 1 only when both distances are zero.
  std::size_t k_star = 0;
  for (std::size_t k = 0; k < u.size(); ++k)
    if (u[k] == 1.0) k_star = k + 1;

  const std::size_t locked = state.locked_prefix.size();
  if (k_star > locked) {
    state.locked_prefix.assign(seq.begin(), seq.begin() + static_cast<long>(k_star));
    state.candidates = all_tasks(num_tasks);
    return;
  }
  if (k_star == locked && locked < seq.size() &&
      std::equal(state.locked_prefix.begin(), state.locked_prefix.end(), seq.begin())) {
    // The candidate tried right after the lock did not extend it: prune it.
    state.candidates.erase(seq[locked]);
    if (state.candidates.empty())
      throw std::logic_error(
          "rule_observe: candidate set exhausted with an optimal-consistent lock; "
          "utility labels are inconsistent");
  }
}

RuleStrategy::RuleStrategy(int num_tasks, int seq_len) : n_(num_tasks), l_(seq_len) {
  state_.candidates = all_tasks(num_tasks);
}

TaskSeq RuleStrategy::propose(Rng& rng) { return rule_propose(state_, n_, l_, rng); }

void RuleStrategy::observe(const TaskSeq& seq, const UtilityVector& u) {
  rule_observe(state_, seq, u, n_);
}

// ---- DDQN ------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
  data_.reserve(capacity);
}

void ReplayBuffer::add(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

const Transition& ReplayBuffer::sample(Rng& rng) const {
  if (data_.empty()) throw std::logic_error("ReplayBuffer: sample from empty buffer");
  return data_[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(data_.size()) - 1))];
}

double double_q_target(double reward, bool done, std::span<const double> q_online_next,
                       std::span<const double> q_target_next, double gamma) {
  if (done) return reward;
  if (q_online_next.empty() || q_online_next.size() != q_target_next.size())
    throw std::invalid_argument("double_q_target: mismatched Q rows");
  const auto best = static_cast<std::size_t>(
      std::max_element(q_online_next.begin(), q_online_next.end()) -
      q_online_next.begin());
  return reward + gamma * q_target_next[best];
}

Mlp::Mlp(int in, const std::vector<int>& hidden, int out, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  layers_ = dims.size() - 1;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto fan_in = static_cast<std::size_t>(dims[i]);
    const auto fan_out = static_cast<std::size_t>(dims[i + 1]);
    Tensor w = Tensor::zeros({fan_in, fan_out}, true);
    const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w.values()) v = rng.normal(0.0, std);
    params_.push_back({"fc" + std::to_string(i) + ".weight", std::move(w)});
    params_.push_back({"fc" + std::to_string(i) + ".bias",
                       Tensor::zeros({fan_out}, true)});
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_; ++i) {
    h = linear(h, params_[2 * i].tensor, params_[2 * i + 1].tensor);
    if (i + 1 < layers_) h = silu(h);
  }
  return h;
}

void Mlp::copy_from(const Mlp& other) {
  if (params_.size() != other.params_.size())
    throw std::invalid_argument("Mlp::copy_from: layer mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i)
    params_[i].tensor.values() = other.params_[i].tensor.values();
}

DdqnStrategy::DdqnStrategy(int num_tasks, int seq_len, DdqnConfig cfg)
    : n_(num_tasks),
      l_(seq_len),
      cfg_(cfg),
      online_(seq_len + 1, cfg.hidden_sizes, num_tasks, derive_seed(cfg.seed, 1)),
      target_(seq_len + 1, cfg.hidden_sizes, num_tasks, derive_seed(cfg.seed, 1)),
      buffer_(static_cast<std::size_t>(cfg.buffer_capacity)),
      opt_(0.9, 0.999, 1e-8, 0.0),
      rng_(derive_seed(cfg.seed, 2)) {
  target_.copy_from(online_);
}

std::vector<double> DdqnStrategy::encode_state(const TaskSeq& prefix) const {
  std::vector<double> s(static_cast<std::size_t>(l_) + 1, 0.0);
  for (std::size_t i = 0; i < prefix.size(); ++i)
    s[i] = static_cast<double>(prefix[i] + 1) / static_cast<double>(n_ + 1);
  s.back() = static_cast<double>(prefix.size()) / static_cast<double>(l_);
  return s;
}

void DdqnStrategy::observe(const TaskSeq& seq, const UtilityVector& u) {
  if (static_cast<int>(seq.size()) != l_ || u.size() != seq.size())
    throw std::invalid_argument("DdqnStrategy::observe: length mismatch");
  const double u_bar = scalar_utility(u);
  TaskSeq prefix;
  for (int t = 0; t < l_; ++t) {
    Transition tr;
    tr.state = encode_state(prefix);
    tr.action = seq[static_cast<std::size_t>(t)];
    prefix.push_back(seq[static_cast<std::size_t>(t)]);
    tr.next_state = encode_state(prefix);
    tr.done = (t + 1 == l_);
    if (cfg_.terminal_reward_only)
      tr.reward = tr.done ? u_bar : 0.0;
    else
      tr.reward = u[static_cast<std::size_t>(t)];
    buffer_.add(std::move(tr));
  }
  if (warmed_) train_updates(cfg_.updates_per_observe);
}

void DdqnStrategy::train_updates(int count) {
  const auto bsz = static_cast<std::size_t>(cfg_.batch_size);
  for (int c = 0; c < count; ++c) {
    if (buffer_.size() == 0) return;
    std::vector<const Transition*> batch(bsz);
    for (auto& t : batch) t = &buffer_.sample(rng_);

    std::vector<double> targets(bsz);
    {
      NoGradGuard ng;
      std::vector<double> next_states;
      next_states.reserve(bsz * (static_cast<std::size_t>(l_) + 1));
      for (const auto* t : batch)
        next_states.insert(next_states.end(), t->next_state.begin(), t->next_state.end());
      Tensor ns = Tensor::from({bsz, static_cast<std::size_t>(l_) + 1},
                               std::move(next_states));
      const auto q_on = online_.forward(ns).values();
      const auto q_tg = target_.forward(ns).values();
      const auto na = static_cast<std::size_t>(n_);
      for (std::size_t i = 0; i < bsz; ++i)
        targets[i] = double_q_target(
            batch[i]->reward, batch[i]->done,
            {q_on.data() + i * na, na}, {q_tg.data() + i * na, na}, cfg_.gamma);
    }

    std::vector<double> states;
    states.reserve(bsz * (static_cast<std::size_t>(l_) + 1));
    std::vector<std::size_t> actions(bsz);
    for (std::size_t i = 0; i < bsz; ++i) {
      states.insert(states.end(), batch[i]->state.begin(), batch[i]->state.end());
      actions[i] = static_cast<std::size_t>(batch[i]->action);
    }
    Tensor s = Tensor::from({bsz, static_cast<std::size_t>(l_) + 1}, std::move(states));
    Tensor q = gather_last(online_.forward(s), actions);       // (bsz)
    Tensor diff = add(q, scale(Tensor::from({bsz}, targets), -1.0));
    Tensor loss = scale(sum_all(mul(diff, diff)), 1.0 / static_cast<double>(bsz));

    if (!std::isfinite(loss.item())) {
      ++skipped_updates_;
      continue;
    }
    zero_grads(online_.parameters());
    backward(loss);
    if (!opt_.step(online_.parameters(), cfg_.lr)) {
      ++skipped_updates_;
      continue;
    }
    ++updates_;
    if (cfg_.sync_every > 0 && updates_ % static_cast<std::size_t>(cfg_.sync_every) == 0)
      target_.copy_from(online_);
  }
}

TaskSeq epsilon_greedy_rollout(
    int num_tasks, int seq_len, double eps, Rng& rng,
    const std::function<std::vector<double>(const TaskSeq& prefix)>& q_values) {
  TaskSeq out;
  out.reserve(static_cast<std::size_t>(seq_len));
  for (int t = 0; t < seq_len; ++t) {
    TaskId a;
    if (rng.uniform_real() < eps) {
      a = static_cast<TaskId>(rng.uniform_int(0, num_tasks - 1));
    } else {
      const auto q = q_values(out);
      a = static_cast<TaskId>(std::max_element(q.begin(), q.end()) - q.begin());
    }
    out.push_back(a);
  }
  return out;
}

TaskSeq DdqnStrategy::propose(Rng& rng) {
  if (!warmed_) {
    train_updates(cfg_.prefill_updates);
    warmed_ = true;
  }
  const int horizon = std::max(1, cfg_.total_proposals - 1);
  const double frac =
      std::min(1.0, static_cast<double>(proposals_made_) / horizon);
  const double eps = cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * frac;
  ++proposals_made_;

  return epsilon_greedy_rollout(n_, l_, eps, rng, [this](const TaskSeq& prefix) {
    NoGradGuard ng;
    const auto state = encode_state(prefix);
    Tensor x = Tensor::from({1, state.size()}, state);
    return online_.forward(x).values();
  });
}

}  // namespace taskseq
