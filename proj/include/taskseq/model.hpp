#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "taskseq/context.hpp"
#include "taskseq/optim.hpp"
#include "taskseq/tensor.hpp"

namespace taskseq {

struct ModelConfig {
  int num_tasks = 8;
  int seq_len = 8;
  int d_emb = 64;
  int num_blocks = 12;
  int num_heads = 8;
  int hidden = 256;
  double dropout = 0.05;
  double temperature = 4.0;

  void validate() const;
  /// Reserved begin-of-sequence marker; never appears inside a sequence.
  TaskId bos_id() const { return num_tasks; }
};

/// In-context sequence proposer: an axial-attention context encoder feeding
/// a causally masked target decoder through a two-layer output head.
///
/// Layout of the context tensor is (B, C, L, d): sequence attention mixes
/// tokens along C (which context sequence), task attention along L (which
/// position). The target decoder reuses the task-attention layout on a
/// single sequence with a lower-triangular mask, which is what forces the
/// axis assignment: causality is only meaningful along L.
class Pftsn {
 public:
  Pftsn(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  /// Expected (name, shape) list in serialization order.
  static std::vector<std::pair<std::string, Shape>> manifest(const ModelConfig& cfg);
  /// Overwrites one named parameter; throws on unknown name or shape mismatch.
  void set_parameter(const std::string& name, const std::vector<double>& values);

  /// Packs labeled contexts into the (B, C, L, 3) input tensor:
  /// channel 0 = task id / N, channel 1 = prefix utility, channel 2 =
  /// position scaled to [0, 1]. All batches must share C and L.
  static Tensor encode_inputs(const std::vector<ContextBatch>& batches,
                              const ModelConfig& cfg);

  /// (B, C, L, 3) -> pooled context embedding (B, L, d).
  Tensor encode_context(const Tensor& x, bool training = false, Rng* rng = nullptr) const;

  /// One encoder block (sequence attention, task attention, FFN); exposed
  /// for shape/equivariance tests. x is (B, C, L, d).
  Tensor axial_block(const Tensor& x, int block, bool training = false,
                     Rng* rng = nullptr) const;

  /// BOS-prefixed target rows (each length L) -> decoder states (B, L, d).
  Tensor encode_target(const std::vector<TaskSeq>& prefixes, bool training = false,
                       Rng* rng = nullptr) const;

  /// Position-wise [T_att || X_att] -> logits (B, L, N).
  Tensor predict_logits(const Tensor& t_att, const Tensor& x_att) const;

  /// Autoregressive sampling at the given temperature (argmax when greedy).
  TaskSeq generate(const ContextBatch& context, double temperature, Rng& rng,
                   bool greedy = false) const;

 private:
  Tensor p(const std::string& name) const;
  Tensor mha(const Tensor& x, const std::string& prefix, bool causal) const;
  Tensor attn_sublayer(const Tensor& x, const std::string& prefix, bool causal,
                       bool training, Rng* rng) const;
  Tensor ffn_sublayer(const Tensor& x, const std::string& prefix, bool training,
                      Rng* rng) const;

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace taskseq
