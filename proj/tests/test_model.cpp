#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "taskseq/model.hpp"
#include "taskseq/optim.hpp"

using namespace taskseq;

namespace {

ModelConfig tiny_config(int n = 4, int l = 4) {
  ModelConfig cfg;
  cfg.num_tasks = n;
  cfg.seq_len = l;
  cfg.d_emb = 8;
  cfg.num_blocks = 2;
  cfg.num_heads = 2;
  cfg.hidden = 16;
  cfg.dropout = 0.0;
  cfg.temperature = 4.0;
  return cfg;
}

ContextBatch make_context(const ModelConfig& cfg, int c, Rng& rng) {
  const std::vector<TaskSeq> optimal{
      sample_random(1, cfg.num_tasks, cfg.seq_len, rng).front()};
  ContextBatch ctx;
  ctx.c_min = 1;
  ctx.c_max = c;
  for (int i = 0; i < c; ++i) {
    LabeledSequence s;
    s.tasks = sample_random(1, cfg.num_tasks, cfg.seq_len, rng).front();
    s.utility = utility_vector(s.tasks, optimal);
    ctx.sequences.push_back(std::move(s));
  }
  return ctx;
}

void zero_matching(Pftsn& model, const std::string& needle) {
  for (auto& p : model.parameters())
    if (p.name.find(needle) != std::string::npos)
      std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("encode_inputs channel layout") {
  ModelConfig cfg = tiny_config(8, 2);
  ContextBatch ctx;
  LabeledSequence s;
  s.tasks = {0, 7};
  s.utility = {1.0, 0.5};
  ctx.sequences.push_back(s);
  const auto x = Pftsn::encode_inputs({ctx}, cfg);
  CHECK(x.shape() == Shape{1, 1, 2, 3});
  CHECK(x.values()[0] == 0.0);  // task 0 -> 0
  CHECK(x.values()[1] == 1.0);  // utility channel
  CHECK(x.values()[2] == 0.0);  // position 1 -> 0
  CHECK(x.values()[3] == doctest::Approx(7.0 / 8.0));
  CHECK(x.values()[4] == 0.5);
  CHECK(x.values()[5] == 1.0);  // position L -> 1
}

TEST_CASE("encode_inputs position channel spans [0, 1]") {
  ModelConfig cfg = tiny_config(8, 8);
  Rng rng(1);
  const auto ctx = make_context(cfg, 2, rng);
  const auto x = Pftsn::encode_inputs({ctx}, cfg);
  for (std::size_t k = 0; k < 8; ++k)
    CHECK(x.values()[k * 3 + 2] == doctest::Approx(static_cast<double>(k) / 7.0));
}

TEST_CASE("encode_inputs rejects heterogeneous context sizes") {
  ModelConfig cfg = tiny_config();
  Rng rng(2);
  const auto a = make_context(cfg, 2, rng);
  const auto b = make_context(cfg, 3, rng);
  CHECK_THROWS_AS(Pftsn::encode_inputs({a, b}, cfg), std::invalid_argument);
}

TEST_CASE("axial_block keeps shapes") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 3);
  Rng rng(4);
  for (const auto& dims : std::vector<Shape>{{1, 1, 1, 8}, {2, 5, 8, 8}}) {
    Tensor x = Tensor::zeros(dims);
    for (auto& v : x.values()) v = rng.normal();
    CHECK(model.axial_block(x, 0).shape() == dims);
  }
  CHECK_THROWS_AS(model.axial_block(Tensor::zeros({2, 2, 2, 5}), 0),
                  std::invalid_argument);
}

TEST_CASE("axial_block with zeroed value/output/FFN weights is norm passthrough") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 5);
  zero_matching(model, ".wv");
  zero_matching(model, ".wo");
  zero_matching(model, ".ffn.w");
  Rng rng(6);
  Tensor x = Tensor::zeros({2, 3, 4, 8});
  for (auto& v : x.values()) v = rng.normal();
  const auto y = model.axial_block(x, 0);
  Tensor gain = Tensor::full({8}, 1.0);
  const auto want = rms_norm(x, gain);
  CHECK(max_abs_diff(y.values(), want.values()) < 1e-12);
}

TEST_CASE("axial_block is permutation-equivariant along the context axis") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 7);
  Rng rng(8);
  const std::size_t c = 5, l = 4, d = 8;
  Tensor x = Tensor::zeros({1, c, l, d});
  for (auto& v : x.values()) v = rng.normal();
  const auto y = model.axial_block(x, 1);

  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor xp = Tensor::zeros({1, c, l, d});
  for (std::size_t i = 0; i < c; ++i)
    std::copy_n(x.values().begin() + static_cast<long>(perm[i] * l * d), l * d,
                xp.values().begin() + static_cast<long>(i * l * d));
  const auto yp = model.axial_block(xp, 1);
  for (std::size_t i = 0; i < c; ++i) {
    std::vector<double> want(y.values().begin() + static_cast<long>(perm[i] * l * d),
                             y.values().begin() + static_cast<long>((perm[i] + 1) * l * d));
    std::vector<double> got(yp.values().begin() + static_cast<long>(i * l * d),
                            yp.values().begin() + static_cast<long>((i + 1) * l * d));
    CHECK(max_abs_diff(want, got) < 1e-9);
  }
}

TEST_CASE("encode_context is invariant to duplicating and shuffling the context") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 9);
  Rng rng(10);
  const auto ctx = make_context(cfg, 4, rng);

  const auto base = model.encode_context(Pftsn::encode_inputs({ctx}, cfg));

  ContextBatch doubled = ctx;
  for (const auto& s : ctx.sequences) doubled.sequences.push_back(s);
  const auto dup = model.encode_context(Pftsn::encode_inputs({doubled}, cfg));
  CHECK(max_abs_diff(base.values(), dup.values()) < 1e-9);

  ContextBatch shuffled = ctx;
  std::swap(shuffled.sequences[0], shuffled.sequences[3]);
  std::swap(shuffled.sequences[1], shuffled.sequences[2]);
  const auto shuf = model.encode_context(Pftsn::encode_inputs({shuffled}, cfg));
  CHECK(max_abs_diff(base.values(), shuf.values()) < 1e-9);
}

TEST_CASE("encode_context pools to (B, L, d)") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 11);
  Rng rng(12);
  const auto one = make_context(cfg, 1, rng);
  const auto x = model.encode_context(Pftsn::encode_inputs({one}, cfg));
  CHECK(x.shape() == Shape{1, 4, 8});
}

TEST_CASE("encode_target causality: perturbing position j leaves earlier rows fixed") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 13);
  const std::size_t l = 4, d = 8;
  TaskSeq base{cfg.bos_id(), 1, 2, 3};
  const auto ref = model.encode_target({base});
  for (std::size_t j = 1; j < l; ++j) {
    TaskSeq perturbed = base;
    perturbed[j] = (perturbed[j] + 1) % cfg.num_tasks;
    const auto out = model.encode_target({perturbed});
    for (std::size_t k = 0; k < l; ++k) {
      std::vector<double> a(ref.values().begin() + static_cast<long>(k * d),
                            ref.values().begin() + static_cast<long>((k + 1) * d));
      std::vector<double> b(out.values().begin() + static_cast<long>(k * d),
                            out.values().begin() + static_cast<long>((k + 1) * d));
      if (k < j)
        CHECK(max_abs_diff(a, b) < 1e-12);
      else if (k == j)
        CHECK(max_abs_diff(a, b) > 1e-9);
    }
  }
}

TEST_CASE("encode_target validates BOS and handles L = 1") {
  ModelConfig cfg = tiny_config(4, 1);
  Pftsn model(cfg, 14);
  CHECK(model.encode_target({TaskSeq{cfg.bos_id()}}).shape() == Shape{1, 1, 8});
  CHECK_THROWS_AS(model.encode_target({TaskSeq{0}}), std::invalid_argument);
}

TEST_CASE("agreement on a common prefix gives identical early outputs") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 15);
  const std::size_t d = 8;
  const auto a = model.encode_target({TaskSeq{cfg.bos_id(), 1, 2, 3}});
  const auto b = model.encode_target({TaskSeq{cfg.bos_id(), 1, 0, 0}});
  for (std::size_t k = 0; k < 2; ++k) {  // positions 1..2 share the prefix
    std::vector<double> va(a.values().begin() + static_cast<long>(k * d),
                           a.values().begin() + static_cast<long>((k + 1) * d));
    std::vector<double> vb(b.values().begin() + static_cast<long>(k * d),
                           b.values().begin() + static_cast<long>((k + 1) * d));
    CHECK(max_abs_diff(va, vb) < 1e-12);
  }
}

TEST_CASE("predict_logits shapes, finiteness, and the zeroed-head uniform case") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 16);
  Rng rng(17);
  const auto ctx = make_context(cfg, 3, rng);
  const auto x_att = model.encode_context(Pftsn::encode_inputs({ctx}, cfg));
  const auto t_att = model.encode_target({TaskSeq{cfg.bos_id(), 0, 1, 2}});
  auto logits = model.predict_logits(t_att, x_att);
  CHECK(logits.shape() == Shape{1, 4, 4});
  for (double v : logits.values()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(model.predict_logits(t_att, Tensor::zeros({2, 4, 8})),
                  std::invalid_argument);

  zero_matching(model, "head.");
  logits = model.predict_logits(t_att, x_att);
  for (double v : logits.values()) CHECK(v == 0.0);
  const auto probs = softmax_last(logits);
  for (double v : probs.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("greedy generation is deterministic and well-formed") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 18);
  Rng ctx_rng(19);
  const auto ctx = make_context(cfg, 4, ctx_rng);
  Rng a(1), b(2);
  const auto sa = model.generate(ctx, 1.0, a, /*greedy=*/true);
  const auto sb = model.generate(ctx, 1.0, b, /*greedy=*/true);
  CHECK(sa == sb);  // argmax ignores the rng
  CHECK(sa.size() == 4);
  for (TaskId t : sa) {
    CHECK(t >= 0);
    CHECK(t < cfg.num_tasks);
  }
}

TEST_CASE("zeroed head samples uniformly at temperature 4") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 20);
  zero_matching(model, "head.");
  Rng ctx_rng(21);
  const auto ctx = make_context(cfg, 3, ctx_rng);
  Rng rng(22);
  const int reps = 10000;
  std::vector<std::vector<int>> counts(4, std::vector<int>(4, 0));
  for (int i = 0; i < reps; ++i) {
    const auto s = model.generate(ctx, 4.0, rng);
    for (std::size_t k = 0; k < 4; ++k) counts[k][static_cast<std::size_t>(s[k])]++;
  }
  const double p = 0.25;
  const double sigma = std::sqrt(reps * p * (1 - p));
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t t = 0; t < 4; ++t)
      CHECK(std::abs(counts[k][t] - reps * p) <= 3.0 * sigma);
}

TEST_CASE("checkpoint manifest covers every parameter exactly once") {
  ModelConfig cfg = tiny_config();
  Pftsn model(cfg, 23);
  const auto manifest = Pftsn::manifest(cfg);
  REQUIRE(manifest.size() == model.parameters().size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    CHECK(manifest[i].first == model.parameters()[i].name);
    CHECK(manifest[i].second == model.parameters()[i].tensor.shape());
  }
}

TEST_CASE("full loss pipeline passes a quick gradient probe") {
  ModelConfig cfg = tiny_config(3, 3);
  cfg.d_emb = 8;
  cfg.num_blocks = 1;
  cfg.num_heads = 2;
  cfg.hidden = 8;
  Pftsn model(cfg, 24);
  Rng rng(25);
  const auto ctx = make_context(cfg, 2, rng);
  const Tensor x = Pftsn::encode_inputs({ctx}, cfg);
  const TaskSeq prefix{cfg.bos_id(), 1, 0};

  auto loss_fn = [&] {
    const auto x_att = model.encode_context(x);
    const auto t_att = model.encode_target({prefix});
    const auto logits = model.predict_logits(t_att, x_att);
    const auto logp = log_softmax_last(logits);
    std::vector<std::size_t> idx{1, 0, 2};
    return scale(sum_all(gather_last(logp, idx)), -1.0);
  };
  Rng probe(26);
  const double err = grad_check(loss_fn, model.parameters(), 1e-5, 400, probe);
  CHECK(err < 1e-4);
}
