#pragma once

#include <functional>
#include <string>
#include <vector>

#include "taskseq/tensor.hpp"

namespace taskseq {

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// AdamW with decoupled weight decay. Rejects steps whose gradients contain
/// non-finite values (returns false, leaves parameters and moments untouched).
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
        double weight_decay = 0.0)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  bool step(std::vector<Parameter>& params, double lr);
  void reset();
  std::size_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  struct Slot { std::vector<double> m, v; };
  std::vector<Slot> slots_;
};

void zero_grads(std::vector<Parameter>& params);

/// Max relative central-difference error over parameter coordinates.
/// `loss_fn` must be deterministic (dropout off). When the total coordinate
/// count exceeds `max_coords`, a random subset of max_coords (>= 200 of them)
/// is probed instead.
double grad_check(const std::function<Tensor()>& loss_fn,
                  std::vector<Parameter>& params, double step_h,
                  std::size_t max_coords, Rng& rng);

}  // namespace taskseq
