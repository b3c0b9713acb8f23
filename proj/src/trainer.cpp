#include "taskseq/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "taskseq/datastore.hpp"
#include "taskseq/optim.hpp"

namespace taskseq {

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (lr < 0.0) throw std::invalid_argument("TrainConfig: negative lr");
  if (warmup_steps < 0) throw std::invalid_argument("TrainConfig: negative warmup");
  if (c_min < 1 || c_max <= c_min)
    throw std::invalid_argument("TrainConfig: need 1 <= c_min < c_max");
  if (min_over_optimal_cap < 1)
    throw std::invalid_argument("TrainConfig: min_over_optimal_cap must be >= 1");
  if (checkpoint_every < 1)
    throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 1");
}

double TrainConfig::lr_at(int step) const {
  if (warmup_steps > 0 && step <= warmup_steps)
    return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  return lr;
}

ProblemSource prior_problem_source(const PriorConfig& prior) {
  prior.validate();
  return [prior](Rng& rng) {
    TrainProblem tp;
    tp.problem = sample_problem(prior, rng);
    return tp;
  };
}

namespace {

TaskSeq teacher_prefix(const TaskSeq& target, TaskId bos) {
  TaskSeq prefix;
  prefix.reserve(target.size());
  prefix.push_back(bos);
  prefix.insert(prefix.end(), target.begin(), target.end() - 1);
  return prefix;
}

// nll per row from raw logits values; rows of length l, n classes
std::vector<double> nll_rows(const Tensor& logits, const std::vector<TaskSeq>& targets) {
  const auto& s = logits.shape();  // (B, L, N)
  const std::size_t l = s[1], n = s[2];
  const auto& v = logits.values();
  std::vector<double> out(targets.size(), 0.0);
  for (std::size_t b = 0; b < targets.size(); ++b)
    for (std::size_t k = 0; k < l; ++k) {
      const double* row = v.data() + (b * l + k) * n;
      double mx = row[0];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
      const auto t = static_cast<std::size_t>(targets[b][k]);
      out[b] += -(row[t] - mx - std::log(z));
    }
  return out;
}

// candidate subset per Eq-1's min: everything when small, else m distinct draws
std::vector<std::size_t> candidate_indices(std::size_t set_size, int m_cap, Rng& rng) {
  if (set_size <= static_cast<std::size_t>(m_cap)) {
    std::vector<std::size_t> all(set_size);
    for (std::size_t i = 0; i < set_size; ++i) all[i] = i;
    return all;
  }
  auto picked = rng.sample_distinct(set_size, static_cast<std::size_t>(m_cap));
  std::sort(picked.begin(), picked.end());  // lowest-index tie-break stays stable
  return picked;
}

Tensor nll_from_logits(const Tensor& logits, const std::vector<TaskSeq>& targets) {
  const auto& s = logits.shape();
  const std::size_t bsz = s[0], l = s[1];
  Tensor logp = log_softmax_last(logits);
  std::vector<std::size_t> idx(bsz * l);
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t k = 0; k < l; ++k)
      idx[b * l + k] = static_cast<std::size_t>(targets[b][k]);
  return scale(sum_all(gather_last(logp, idx)), -1.0);
}

void validate_target(const TaskSeq& target, const ModelConfig& cfg) {
  if (target.size() != static_cast<std::size_t>(cfg.seq_len))
    throw std::invalid_argument("target length " + std::to_string(target.size()) +
                                " does not match model seq_len " +
                                std::to_string(cfg.seq_len));
  for (TaskId t : target)
    if (t < 0 || t >= cfg.num_tasks)
      throw std::invalid_argument("target task id out of range");
}

}  // namespace

Tensor nll_of_target(const Pftsn& model, const ContextBatch& context,
                     const TaskSeq& target, bool training, Rng* rng) {
  const auto& cfg = model.config();
  validate_target(target, cfg);
  Tensor x_att = model.encode_context(Pftsn::encode_inputs({context}, cfg), training, rng);
  Tensor t_att = model.encode_target({teacher_prefix(target, cfg.bos_id())}, training, rng);
  return nll_from_logits(model.predict_logits(t_att, x_att), {target});
}

Tensor loss_min_over_optimal(const Pftsn& model, const ContextBatch& context,
                             const std::vector<TaskSeq>& optimal, int m_cap,
                             Rng& rng, bool training, Rng* dropout_rng) {
  if (optimal.empty())
    throw std::invalid_argument("loss_min_over_optimal: empty optimal set");
  const auto picked = candidate_indices(optimal.size(), m_cap, rng);

  std::size_t best = picked.front();
  if (picked.size() > 1) {
    NoGradGuard ng;  // deterministic scoring pass, dropout off
    double best_nll = std::numeric_limits<double>::infinity();
    for (auto i : picked) {
      const double v = nll_of_target(model, context, optimal[i]).item();
      if (v < best_nll) {
        best_nll = v;
        best = i;
      }
    }
  }
  return nll_of_target(model, context, optimal[best], training, dropout_rng);
}

Pftsn meta_train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const ProblemSource& source, const std::string& out_dir,
                 TrainResult* result, std::ostream* progress) {
  model_cfg.validate();
  train_cfg.validate();
  using Clock = std::chrono::steady_clock;

  Rng rng(derive_seed(train_cfg.seed, 1));
  Pftsn model(model_cfg, derive_seed(train_cfg.seed, 0));
  AdamW opt(0.9, 0.999, 1e-8, train_cfg.weight_decay);

  std::ofstream log_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir + "/train_log.jsonl");
    if (!log_file) throw std::runtime_error("cannot open training log in " + out_dir);
    log_file << "{\"kind\":\"train_log\",\"note\":\"optimizer is AdamW with linear "
                "warmup to a constant rate\",\"steps\":" << train_cfg.steps
             << ",\"batch_size\":" << train_cfg.batch_size
             << ",\"lr\":" << train_cfg.lr
             << ",\"warmup_steps\":" << train_cfg.warmup_steps
             << ",\"weight_decay\":" << train_cfg.weight_decay
             << ",\"c_min\":" << train_cfg.c_min << ",\"c_max\":" << train_cfg.c_max
             << ",\"min_over_optimal_cap\":" << train_cfg.min_over_optimal_cap
             << ",\"seed\":" << train_cfg.seed << "}\n";
  }

  const auto bsz = static_cast<std::size_t>(train_cfg.batch_size);
  const auto l = static_cast<std::size_t>(model_cfg.seq_len);
  const auto d = static_cast<std::size_t>(model_cfg.d_emb);
  int skipped = 0;
  const int skip_budget = std::max(1, train_cfg.steps / 100);

  for (int step = 1; step <= train_cfg.steps; ++step) {
    const auto t0 = Clock::now();
    const int c = static_cast<int>(rng.uniform_int(train_cfg.c_min, train_cfg.c_max));

    // fresh problems and homogeneous-size contexts for this step
    std::vector<TrainProblem> problems(bsz);
    std::vector<ContextBatch> contexts(bsz);
    for (std::size_t b = 0; b < bsz; ++b) {
      problems[b] = source(rng);
      const auto& tp = problems[b];
      if (tp.random_pool.empty() && tp.mutated_pool.empty()) {
        contexts[b] = build_training_context(tp.problem, c, train_cfg.c_min,
                                             train_cfg.c_max, train_cfg.alpha, rng);
      } else {
        const auto [c_rand, c_mut] = mix_context(c, train_cfg.c_min, train_cfg.c_max);
        if (c_rand > static_cast<int>(tp.random_pool.size()) ||
            c_mut > static_cast<int>(tp.mutated_pool.size()))
          throw std::runtime_error("meta_train: dataset context pools smaller than C");
        ContextBatch& ctx = contexts[b];
        ctx.problem_id = tp.problem.problem_id;
        ctx.c_min = train_cfg.c_min;
        ctx.c_max = train_cfg.c_max;
        for (auto i : rng.sample_distinct(tp.random_pool.size(),
                                          static_cast<std::size_t>(c_rand)))
          ctx.sequences.push_back(tp.random_pool[i]);
        for (auto i : rng.sample_distinct(tp.mutated_pool.size(),
                                          static_cast<std::size_t>(c_mut)))
          ctx.sequences.push_back(tp.mutated_pool[i]);
      }
    }

    Tensor x = Pftsn::encode_inputs(contexts, model_cfg);
    Tensor x_att = model.encode_context(x, /*training=*/true, &rng);  // (B, L, d)

    // Candidate scoring (no tape, dropout off) against a detached context
    // embedding; the argmin candidate becomes the teacher-forced target.
    std::vector<std::vector<std::size_t>> cand(bsz);
    std::vector<TaskSeq> prefixes;
    std::vector<const TaskSeq*> flat_targets;
    for (std::size_t b = 0; b < bsz; ++b) {
      cand[b] = candidate_indices(problems[b].problem.optimal.size(),
                                  train_cfg.min_over_optimal_cap, rng);
      for (auto i : cand[b]) {
        const TaskSeq& t = problems[b].problem.optimal[i];
        prefixes.push_back(teacher_prefix(t, model_cfg.bos_id()));
        flat_targets.push_back(&t);
      }
    }
    std::vector<TaskSeq> chosen(bsz);
    {
      NoGradGuard ng;
      Tensor x_det = x_att.detach();
      std::vector<double> rep;
      rep.reserve(prefixes.size() * l * d);
      {
        std::size_t row = 0;
        for (std::size_t b = 0; b < bsz; ++b)
          for (std::size_t k = 0; k < cand[b].size(); ++k, ++row)
            rep.insert(rep.end(), x_det.values().begin() + static_cast<long>(b * l * d),
                       x_det.values().begin() + static_cast<long>((b + 1) * l * d));
      }
      Tensor x_rep = Tensor::from({prefixes.size(), l, d}, std::move(rep));
      Tensor t_att = model.encode_target(prefixes);
      Tensor logits = model.predict_logits(t_att, x_rep);
      std::vector<TaskSeq> targets(flat_targets.size());
      for (std::size_t i = 0; i < flat_targets.size(); ++i) targets[i] = *flat_targets[i];
      const auto nll = nll_rows(logits, targets);
      std::size_t row = 0;
      for (std::size_t b = 0; b < bsz; ++b) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_row = row;
        for (std::size_t k = 0; k < cand[b].size(); ++k, ++row)
          if (nll[row] < best) {
            best = nll[row];
            best_row = row;
          }
        chosen[b] = *flat_targets[best_row];
      }
    }

    // gradient pass through the chosen targets only
    std::vector<TaskSeq> chosen_prefixes(bsz);
    for (std::size_t b = 0; b < bsz; ++b)
      chosen_prefixes[b] = teacher_prefix(chosen[b], model_cfg.bos_id());
    Tensor t_att = model.encode_target(chosen_prefixes, /*training=*/true, &rng);
    Tensor logits = model.predict_logits(t_att, x_att);
    Tensor loss = scale(nll_from_logits(logits, chosen),
                        1.0 / static_cast<double>(bsz));

    const double loss_value = loss.item();
    const double lr = train_cfg.lr_at(step);
    bool ok = std::isfinite(loss_value);
    if (ok) {
      zero_grads(model.parameters());
      backward(loss);
      ok = opt.step(model.parameters(), lr);
    }
    if (!ok) {
      ++skipped;
      if (skipped > skip_budget)
        throw std::runtime_error(
            "meta_train: aborted, more than 1% of steps skipped on non-finite "
            "loss/gradients (" + std::to_string(skipped) + " of " +
            std::to_string(step) + ")");
    }

    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    TrainLogRecord rec{step, loss_value, lr, secs, !ok};
    if (result) result->log.push_back(rec);
    if (log_file) {
      char buf[192];
      std::snprintf(buf, sizeof(buf),
                    "{\"step\":%d,\"loss\":%.9g,\"lr\":%.9g,\"seconds\":%.6f%s}",
                    rec.step, rec.loss, rec.lr, rec.seconds,
                    rec.skipped ? ",\"skipped\":true" : "");
      log_file << buf << '\n';
    }
    if (progress && (step % 50 == 0 || step == 1))
      (*progress) << "step " << step << "/" << train_cfg.steps
                  << " loss " << loss_value << " lr " << lr << " (" << secs << "s)\n";

    if (!out_dir.empty() && step % train_cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "/ckpt_step%06d.ckpt", step);
      save_checkpoint(model, out_dir + name);
    }
  }
  if (result) result->skipped_steps = skipped;
  if (!out_dir.empty()) save_checkpoint(model, out_dir + "/model_final.ckpt");
  return model;
}

}  // namespace taskseq
