#include "taskseq/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace taskseq {

void ModelConfig::validate() const {
  if (num_tasks < 1) throw std::invalid_argument("ModelConfig: num_tasks must be >= 1");
  if (seq_len < 1) throw std::invalid_argument("ModelConfig: seq_len must be >= 1");
  if (num_heads < 1 || d_emb % num_heads != 0)
    throw std::invalid_argument("ModelConfig: d_emb must be divisible by num_heads");
  if (hidden < d_emb)
    throw std::invalid_argument("ModelConfig: hidden must be >= d_emb");
  if (num_blocks < 1) throw std::invalid_argument("ModelConfig: num_blocks must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("ModelConfig: dropout must be in [0, 1)");
  if (temperature <= 0.0)
    throw std::invalid_argument("ModelConfig: temperature must be > 0");
}

std::vector<std::pair<std::string, Shape>> Pftsn::manifest(const ModelConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.d_emb);
  const auto h = static_cast<std::size_t>(cfg.hidden);
  const auto n = static_cast<std::size_t>(cfg.num_tasks);
  std::vector<std::pair<std::string, Shape>> m;
  m.emplace_back("w_in.weight", Shape{3, d});
  m.emplace_back("w_in.bias", Shape{d});
  auto attn = [&](const std::string& prefix) {
    m.emplace_back(prefix + ".pre_norm.gain", Shape{d});
    for (const char* w : {".wq", ".wk", ".wv", ".wo"})
      m.emplace_back(prefix + w, Shape{d, d});
    m.emplace_back(prefix + ".post_norm.gain", Shape{d});
  };
  auto ffn = [&](const std::string& prefix) {
    m.emplace_back(prefix + ".pre_norm.gain", Shape{d});
    m.emplace_back(prefix + ".w1", Shape{d, h});
    m.emplace_back(prefix + ".w3", Shape{d, h});
    m.emplace_back(prefix + ".w2", Shape{h, d});
    m.emplace_back(prefix + ".post_norm.gain", Shape{d});
  };
  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string base = "enc.b" + std::to_string(b);
    attn(base + ".seq_attn");
    attn(base + ".task_attn");
    ffn(base + ".ffn");
  }
  m.emplace_back("enc.final_norm.gain", Shape{d});
  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string base = "dec.b" + std::to_string(b);
    attn(base + ".attn");
    ffn(base + ".ffn");
  }
  m.emplace_back("dec.final_norm.gain", Shape{d});
  m.emplace_back("head.fc1.weight", Shape{2 * d, h});
  m.emplace_back("head.fc1.bias", Shape{h});
  m.emplace_back("head.fc2.weight", Shape{h, n});
  m.emplace_back("head.fc2.bias", Shape{n});
  return m;
}

Pftsn::Pftsn(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  for (const auto& [name, shape] : manifest(cfg_)) {
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    if (name.ends_with(".gain")) {
      std::fill(t.values().begin(), t.values().end(), 1.0);
    } else if (!name.ends_with(".bias")) {
      const double std = 1.0 / std::sqrt(static_cast<double>(shape.front()));
      for (auto& v : t.values()) v = rng.normal(0.0, std);
    }
    index_.emplace(name, params_.size());
    params_.push_back({name, std::move(t)});
  }
}

Tensor Pftsn::p(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::logic_error("Pftsn: unknown parameter " + name);
  return params_[it->second].tensor;
}

void Pftsn::set_parameter(const std::string& name, const std::vector<double>& values) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("Pftsn::set_parameter: unknown parameter " + name);
  auto& t = params_[it->second].tensor;
  if (t.size() != values.size())
    throw std::invalid_argument("Pftsn::set_parameter: size mismatch for " + name);
  t.values() = values;
}

Tensor Pftsn::encode_inputs(const std::vector<ContextBatch>& batches,
                            const ModelConfig& cfg) {
  if (batches.empty()) throw std::invalid_argument("encode_inputs: no batches");
  const std::size_t c = batches.front().sequences.size();
  const auto l = static_cast<std::size_t>(cfg.seq_len);
  if (c == 0) throw std::invalid_argument("encode_inputs: empty context");
  for (const auto& b : batches) {
    if (b.sequences.size() != c)
      throw std::invalid_argument(
          "encode_inputs: heterogeneous context sizes (" + std::to_string(c) +
          " vs " + std::to_string(b.sequences.size()) + ")");
    for (const auto& s : b.sequences)
      if (s.tasks.size() != l || s.utility.size() != l)
        throw std::invalid_argument(
            "encode_inputs: sequence length mismatch (expected " + std::to_string(l) +
            ", got " + std::to_string(s.tasks.size()) + ")");
  }
  const std::size_t bsz = batches.size();
  const double n = cfg.num_tasks;
  Tensor x = Tensor::zeros({bsz, c, l, 3});
  auto& v = x.values();
  std::size_t i = 0;
  for (const auto& b : batches)
    for (const auto& s : b.sequences)
      for (std::size_t k = 0; k < l; ++k) {
        v[i++] = static_cast<double>(s.tasks[k]) / n;
        v[i++] = s.utility[k];
        v[i++] = l > 1 ? static_cast<double>(k) / static_cast<double>(l - 1) : 0.0;
      }
  return x;
}

Tensor Pftsn::mha(const Tensor& x, const std::string& prefix, bool causal) const {
  const auto& s = x.shape();  // (rows, T, d)
  const std::size_t rows = s[0], t = s[1];
  const auto heads = static_cast<std::size_t>(cfg_.num_heads);
  const auto d = static_cast<std::size_t>(cfg_.d_emb);
  const std::size_t dh = d / heads;

  auto split = [&](const Tensor& proj) {
    return transpose(reshape(proj, {rows, t, heads, dh}), 1, 2);  // (rows, H, T, dh)
  };
  Tensor q = split(matmul(x, p(prefix + ".wq")));
  Tensor k = split(matmul(x, p(prefix + ".wk")));
  Tensor v = split(matmul(x, p(prefix + ".wv")));

  Tensor scores = scale(matmul(q, transpose(k, 2, 3)),
                        1.0 / std::sqrt(static_cast<double>(dh)));
  if (causal) {
    std::vector<std::uint8_t> mask(t * t, 0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = i + 1; j < t; ++j) mask[i * t + j] = 1;
    scores = masked_fill(scores, mask, {t, t}, -1e30);
  }
  Tensor ctx = matmul(softmax_last(scores), v);           // (rows, H, T, dh)
  ctx = reshape(transpose(ctx, 1, 2), {rows, t, d});      // (rows, T, d)
  return matmul(ctx, p(prefix + ".wo"));
}

Tensor Pftsn::attn_sublayer(const Tensor& x, const std::string& prefix, bool causal,
                            bool training, Rng* rng) const {
  Tensor h = mha(rms_norm(x, p(prefix + ".pre_norm.gain")), prefix, causal);
  if (training && cfg_.dropout > 0.0 && rng)
    h = dropout(h, cfg_.dropout, *rng, true);
  return rms_norm(add(x, h), p(prefix + ".post_norm.gain"));
}

Tensor Pftsn::ffn_sublayer(const Tensor& x, const std::string& prefix, bool training,
                           Rng* rng) const {
  Tensor h = rms_norm(x, p(prefix + ".pre_norm.gain"));
  Tensor gate = silu(matmul(h, p(prefix + ".w1")));
  Tensor lin = matmul(h, p(prefix + ".w3"));
  Tensor out = matmul(mul(gate, lin), p(prefix + ".w2"));
  if (training && cfg_.dropout > 0.0 && rng)
    out = dropout(out, cfg_.dropout, *rng, true);
  return rms_norm(add(x, out), p(prefix + ".post_norm.gain"));
}

Tensor Pftsn::axial_block(const Tensor& x, int block, bool training, Rng* rng) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[3] != static_cast<std::size_t>(cfg_.d_emb))
    throw std::invalid_argument("axial_block: expected (B,C,L,d), got " +
                                shape_str(s));
  if (block < 0 || block >= cfg_.num_blocks)
    throw std::invalid_argument("axial_block: block index out of range");
  const std::size_t bsz = s[0], c = s[1], l = s[2], d = s[3];
  const std::string base = "enc.b" + std::to_string(block);

  // sequence attention: tokens along C, batched over B x L
  Tensor h = reshape(transpose(x, 1, 2), {bsz * l, c, d});
  h = attn_sublayer(h, base + ".seq_attn", false, training, rng);
  h = transpose(reshape(h, {bsz, l, c, d}), 1, 2);

  // task attention: tokens along L, batched over B x C
  h = reshape(h, {bsz * c, l, d});
  h = attn_sublayer(h, base + ".task_attn", false, training, rng);
  h = reshape(h, {bsz, c, l, d});

  return ffn_sublayer(h, base + ".ffn", training, rng);
}

Tensor Pftsn::encode_context(const Tensor& x, bool training, Rng* rng) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[3] != 3)
    throw std::invalid_argument("encode_context: expected (B,C,L,3), got " +
                                shape_str(s));
  Tensor h = linear(x, p("w_in.weight"), p("w_in.bias"));
  for (int b = 0; b < cfg_.num_blocks; ++b) h = axial_block(h, b, training, rng);
  h = rms_norm(h, p("enc.final_norm.gain"));
  return mean_axis(h, 1);  // pool over C -> (B, L, d)
}

Tensor Pftsn::encode_target(const std::vector<TaskSeq>& prefixes, bool training,
                            Rng* rng) const {
  if (prefixes.empty()) throw std::invalid_argument("encode_target: no prefixes");
  const auto l = static_cast<std::size_t>(cfg_.seq_len);
  const double n = cfg_.num_tasks;
  for (const auto& pre : prefixes) {
    if (pre.size() != l)
      throw std::invalid_argument("encode_target: prefix length " +
                                  std::to_string(pre.size()) + ", expected " +
                                  std::to_string(l));
    if (pre[0] != cfg_.bos_id())
      throw std::invalid_argument("encode_target: first token must be BOS");
    for (std::size_t j = 1; j < l; ++j)
      if (pre[j] < 0 || pre[j] >= cfg_.num_tasks)
        throw std::invalid_argument("encode_target: task id out of range");
  }
  const std::size_t bsz = prefixes.size();
  Tensor x = Tensor::zeros({bsz, l, 3});
  auto& v = x.values();
  std::size_t i = 0;
  for (const auto& pre : prefixes)
    for (std::size_t k = 0; k < l; ++k) {
      v[i++] = static_cast<double>(pre[k]) / n;  // BOS id N maps to 1.0
      v[i++] = -1.0;                             // <unknown> utility sentinel
      v[i++] = l > 1 ? static_cast<double>(k) / static_cast<double>(l - 1) : 0.0;
    }

  Tensor h = linear(x, p("w_in.weight"), p("w_in.bias"));
  for (int b = 0; b < cfg_.num_blocks; ++b) {
    const std::string base = "dec.b" + std::to_string(b);
    h = attn_sublayer(h, base + ".attn", /*causal=*/true, training, rng);
    h = ffn_sublayer(h, base + ".ffn", training, rng);
  }
  return rms_norm(h, p("dec.final_norm.gain"));
}

Tensor Pftsn::predict_logits(const Tensor& t_att, const Tensor& x_att) const {
  if (t_att.shape() != x_att.shape())
    throw std::invalid_argument("predict_logits: shape mismatch " +
                                shape_str(t_att.shape()) + " vs " +
                                shape_str(x_att.shape()));
  Tensor h = concat_last(t_att, x_att);
  h = silu(linear(h, p("head.fc1.weight"), p("head.fc1.bias")));
  return linear(h, p("head.fc2.weight"), p("head.fc2.bias"));
}

TaskSeq Pftsn::generate(const ContextBatch& context, double temperature, Rng& rng,
                        bool greedy) const {
  if (temperature <= 0.0 && !greedy)
    throw std::invalid_argument("generate: temperature must be > 0");
  NoGradGuard ng;
  const auto l = static_cast<std::size_t>(cfg_.seq_len);
  const auto n = static_cast<std::size_t>(cfg_.num_tasks);

  Tensor x_att = encode_context(encode_inputs({context}, cfg_));

  TaskSeq input(l, 0);
  input[0] = cfg_.bos_id();
  TaskSeq out;
  out.reserve(l);
  for (std::size_t k = 0; k < l; ++k) {
    Tensor t_att = encode_target({input});
    Tensor logits = predict_logits(t_att, x_att);  // (1, L, N)
    const double* row = logits.values().data() + k * n;
    TaskId next;
    if (greedy) {
      next = static_cast<TaskId>(
          std::max_element(row, row + n) - row);
    } else {
      double mx = row[0];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      std::vector<double> probs(n);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        probs[j] = std::exp((row[j] - mx) / temperature);
        z += probs[j];
      }
      const double u = rng.uniform_real() * z;
      double cum = 0.0;
      next = static_cast<TaskId>(n - 1);
      for (std::size_t j = 0; j < n; ++j) {
        cum += probs[j];
        if (u < cum) { next = static_cast<TaskId>(j); break; }
      }
    }
    out.push_back(next);
    if (k + 1 < l) input[k + 1] = next;
  }
  return out;
}

}  // namespace taskseq
