#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "taskseq/rng.hpp"

namespace taskseq {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily on first backward touch
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pulls node.grad into parents

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};
}  // namespace detail

/// Dense row-major 64-bit float tensor participating in a dynamic autodiff
/// tape. Copies share the underlying node (shallow value semantics).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad() { node_->ensure_grad(); return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad() { if (node_) node_->grad.assign(node_->value.size(), 0.0); }

  double item() const;

  /// Same values, detached from the tape.
  Tensor detach() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n) { Tensor t; t.node_ = std::move(n); return t; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Whether newly created ops record backward closures (thread-local).
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

// ---- ops ------------------------------------------------------------

/// a (..., m, k) x b: weight mode when b is 2-D (k, n); batched mode when
/// b has identical leading dims (..., k, n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Same shape, or bias broadcast when b's shape equals a's trailing dims.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);   // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a, std::size_t ax1, std::size_t ax2);
Tensor reshape(const Tensor& a, Shape shape);
Tensor mean_axis(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor sum_scalars(const std::vector<Tensor>& xs);
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor softmax_last(const Tensor& a);
Tensor log_softmax_last(const Tensor& a);
Tensor silu(const Tensor& a);
/// x / max(rms(x), eps) * gain over the last axis; gain shape = (last dim).
Tensor rms_norm(const Tensor& a, const Tensor& gain, double eps = 1e-8);
/// Replaces entries where mask != 0 with `value`; mask shape must be a
/// suffix of a's shape (broadcast over the leading axes).
Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& mask,
                   const Shape& mask_shape, double value);
/// x (..., in) * w (in, out) + optional bias (out). Pass a default-constructed
/// Tensor to omit the bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng, bool training);
/// out[r] = a[r, idx[r]] over the last axis; idx.size() = rows.
Tensor gather_last(const Tensor& a, const std::vector<std::size_t>& idx);

/// Reverse-mode sweep from a scalar loss. Grads accumulate additively into
/// every reachable node that requires grad.
void backward(const Tensor& loss);

}  // namespace taskseq
