#include "taskseq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace taskseq {

using detail::Node;

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> make_node(Shape shape, std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.resize(shape_size(n->shape), 0.0);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg && g_grad_enabled;
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

void acc(Node& p, const std::vector<double>& g) {
  p.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
}

// C (m,n) += A (m,k) * B (k,n)
void mm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
           std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double a = A[i * k + l];
      if (a == 0.0) continue;
      const double* brow = B + l * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}

// C (m,k) += A (m,n) * B^T, with B stored as (k,n)
void mm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t n,
           std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double* arow = A + i * n;
      const double* brow = B + l * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      C[i * k + l] += s;
    }
}

// C (k,n) += A^T * B, with A stored as (m,k), B as (m,n)
void mm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
           std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double a = A[i * k + l];
      if (a == 0.0) continue;
      const double* brow = B + i * n;
      double* crow = C + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(std::move(shape), {});
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size())
    throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

double Tensor::item() const {
  if (size() != 1)
    throw std::invalid_argument("Tensor::item: not a scalar, shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = false;
  return wrap(std::move(n));
}

// ---- ops ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    throw std::invalid_argument("matmul: need rank >= 2, got " + shape_str(sa) +
                                " and " + shape_str(sb));
  const std::size_t m = sa[sa.size() - 2], k = sa[sa.size() - 1];
  const bool weight_mode = sb.size() == 2;
  if (!weight_mode) {
    if (sb.size() != sa.size() ||
        !std::equal(sa.begin(), sa.end() - 2, sb.begin()))
      throw std::invalid_argument("matmul: incompatible batch dims " + shape_str(sa) +
                                  " and " + shape_str(sb));
  }
  const std::size_t kb = sb[sb.size() - 2], n = sb[sb.size() - 1];
  if (k != kb)
    throw std::invalid_argument("matmul: inner dims differ, " + shape_str(sa) +
                                " vs " + shape_str(sb));
  const std::size_t batches = shape_size(sa) / (m * k);

  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  auto out = make_node(std::move(out_shape), {a.node(), b.node()});

  const double* A = a.values().data();
  const double* B = b.values().data();
  double* C = out->value.data();
  for (std::size_t q = 0; q < batches; ++q)
    mm_nn(A + q * m * k, weight_mode ? B : B + q * k * n, C + q * m * n, m, k, n);

  if (out->requires_grad) {
    out->backward_fn = [m, k, n, batches, weight_mode](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const double* G = self.grad.data();
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t q = 0; q < batches; ++q)
          mm_nt(G + q * m * n, pb.value.data() + (weight_mode ? 0 : q * k * n),
                pa.grad.data() + q * m * k, m, n, k);
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t q = 0; q < batches; ++q)
          mm_tn(pa.value.data() + q * m * k, G + q * m * n,
                pb.grad.data() + (weight_mode ? 0 : q * k * n), m, k, n);
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool same = sa == sb;
  const bool suffix = !same && sb.size() <= sa.size() &&
                      std::equal(sb.begin(), sb.end(), sa.end() - static_cast<long>(sb.size()));
  if (!same && !suffix)
    throw std::invalid_argument("add: shapes " + shape_str(sa) + " and " +
                                shape_str(sb) + " are not addable");
  auto out = make_node(sa, {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  const std::size_t bs = bv.size();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i % bs];

  if (out->requires_grad) {
    out->backward_fn = [bs](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) acc(pa, self.grad);
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb.grad[i % bs] += self.grad[i];
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  auto out = make_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];

  if (out->requires_grad) {
    out->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa.grad[i] += self.grad[i] * pb.value[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb.grad[i] += self.grad[i] * pa.value[i];
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor scale(const Tensor& a, double s) {
  auto out = make_node(a.shape(), {a.node()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * s;
  if (out->requires_grad) {
    out->backward_fn = [s](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * s;
    };
  }
  return Tensor::wrap(std::move(out));
}

namespace {

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Walks the output of a two-axis swap in flat order, tracking the matching
// input offset with an odometer (no divisions, no index table). `fn` receives
// (out_index, in_index).
template <typename F>
void for_each_transposed(const Shape& in_shape, std::size_t ax1, std::size_t ax2,
                         F&& fn) {
  Shape out_shape = in_shape;
  std::swap(out_shape[ax1], out_shape[ax2]);
  const auto in_st = strides_of(in_shape);
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> step(rank);  // input stride per output digit
  for (std::size_t d = 0; d < rank; ++d) {
    std::size_t src = d;
    if (d == ax1) src = ax2;
    else if (d == ax2) src = ax1;
    step[d] = in_st[src];
  }
  const std::size_t total = shape_size(in_shape);
  std::vector<std::size_t> coord(rank, 0);
  std::size_t in_idx = 0;
  for (std::size_t oi = 0; oi < total; ++oi) {
    fn(oi, in_idx);
    for (std::size_t d = rank; d-- > 0;) {
      ++coord[d];
      in_idx += step[d];
      if (coord[d] < out_shape[d]) break;
      in_idx -= step[d] * out_shape[d];
      coord[d] = 0;
    }
  }
}

}  // namespace

Tensor transpose(const Tensor& a, std::size_t ax1, std::size_t ax2) {
  const auto& sa = a.shape();
  if (ax1 >= sa.size() || ax2 >= sa.size())
    throw std::invalid_argument("transpose: axis out of range for " + shape_str(sa));
  Shape out_shape = sa;
  std::swap(out_shape[ax1], out_shape[ax2]);
  auto out = make_node(std::move(out_shape), {a.node()});
  const double* src = a.values().data();
  double* dst = out->value.data();
  for_each_transposed(sa, ax1, ax2,
                      [&](std::size_t oi, std::size_t ii) { dst[oi] = src[ii]; });
  if (out->requires_grad) {
    out->backward_fn = [shape = sa, ax1, ax2](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const double* g = self.grad.data();
      double* d = pa.grad.data();
      for_each_transposed(shape, ax1, ax2,
                          [&](std::size_t oi, std::size_t ii) { d[ii] += g[oi]; });
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) +
                                " as " + shape_str(shape));
  auto out = make_node(std::move(shape), {a.node()});
  out->value = a.values();
  if (out->requires_grad) {
    out->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      if (pa.requires_grad) acc(pa, self.grad);
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  const auto& sa = a.shape();
  if (axis >= sa.size())
    throw std::invalid_argument("mean_axis: axis out of range for " + shape_str(sa));
  const std::size_t extent = sa[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= sa[d];
  for (std::size_t d = axis + 1; d < sa.size(); ++d) inner *= sa[d];
  Shape out_shape;
  for (std::size_t d = 0; d < sa.size(); ++d)
    if (d != axis) out_shape.push_back(sa[d]);
  auto out = make_node(std::move(out_shape), {a.node()});
  const auto& av = a.values();
  const double inv = 1.0 / static_cast<double>(extent);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e) {
      const double* src = av.data() + (o * extent + e) * inner;
      double* dst = out->value.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
    }
  if (out->requires_grad) {
    out->backward_fn = [outer, extent, inner, inv](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e) {
          double* dst = pa.grad.data() + (o * extent + e) * inner;
          const double* src = self.grad.data() + o * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
        }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor sum_all(const Tensor& a) {
  auto out = make_node({}, {a.node()});
  double s = 0.0;
  for (double v : a.values()) s += v;
  out->value[0] = s;
  if (out->requires_grad) {
    out->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const double g = self.grad[0];
      for (auto& x : pa.grad) x += g;
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor sum_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("sum_scalars: empty input");
  std::vector<std::shared_ptr<Node>> parents;
  double s = 0.0;
  for (const auto& x : xs) {
    if (x.size() != 1)
      throw std::invalid_argument("sum_scalars: non-scalar input of shape " +
                                  shape_str(x.shape()));
    s += x.values()[0];
    parents.push_back(x.node());
  }
  auto out = make_node({}, std::move(parents));
  out->value[0] = s;
  if (out->requires_grad) {
    out->backward_fn = [](Node& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        p->grad[0] += self.grad[0];
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != sb.size() || sa.empty() ||
      !std::equal(sa.begin(), sa.end() - 1, sb.begin()))
    throw std::invalid_argument("concat_last: shapes " + shape_str(sa) + " and " +
                                shape_str(sb) + " differ before the last axis");
  const std::size_t la = sa.back(), lb = sb.back();
  const std::size_t rows = a.size() / la;
  Shape out_shape = sa;
  out_shape.back() = la + lb;
  auto out = make_node(std::move(out_shape), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * la, la, out->value.data() + r * (la + lb));
    std::copy_n(bv.data() + r * lb, lb, out->value.data() + r * (la + lb) + la);
  }
  if (out->requires_grad) {
    out->backward_fn = [rows, la, lb](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < la; ++i)
            pa.grad[r * la + i] += self.grad[r * (la + lb) + i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < lb; ++i)
            pb.grad[r * lb + i] += self.grad[r * (la + lb) + la + i];
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor softmax_last(const Tensor& a) {
  const auto& sa = a.shape();
  if (sa.empty()) throw std::invalid_argument("softmax_last: scalar input");
  const std::size_t n = sa.back();
  const std::size_t rows = a.size() / n;
  auto out = make_node(sa, {a.node()});
  const auto& av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out->value.data() + r * n;
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) { y[i] = std::exp(x[i] - mx); z += y[i]; }
    const double inv = 1.0 / z;
    for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
  }
  if (out->requires_grad) {
    out->backward_fn = [rows, n](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * n;
        const double* g = self.grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
        double* d = pa.grad.data() + r * n;
        for (std::size_t i = 0; i < n; ++i) d[i] += y[i] * (g[i] - dot);
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor log_softmax_last(const Tensor& a) {
  const auto& sa = a.shape();
  if (sa.empty()) throw std::invalid_argument("log_softmax_last: scalar input");
  const std::size_t n = sa.back();
  const std::size_t rows = a.size() / n;
  auto out = make_node(sa, {a.node()});
  const auto& av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out->value.data() + r * n;
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - mx);
    const double lz = std::log(z) + mx;
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lz;
  }
  if (out->requires_grad) {
    out->backward_fn = [rows, n](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * n;
        const double* g = self.grad.data() + r * n;
        double gsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) gsum += g[i];
        double* d = pa.grad.data() + r * n;
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] - std::exp(y[i]) * gsum;
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor silu(const Tensor& a) {
  auto out = make_node(a.shape(), {a.node()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-av[i]));
    out->value[i] = av[i] * s;
  }
  if (out->requires_grad) {
    out->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double x = pa.value[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        pa.grad[i] += self.grad[i] * s * (1.0 + x * (1.0 - s));
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor rms_norm(const Tensor& a, const Tensor& gain, double eps) {
  const auto& sa = a.shape();
  if (sa.empty()) throw std::invalid_argument("rms_norm: scalar input");
  const std::size_t n = sa.back();
  if (gain.shape() != Shape{n})
    throw std::invalid_argument("rms_norm: gain shape " + shape_str(gain.shape()) +
                                " does not match last dim of " + shape_str(sa));
  const std::size_t rows = a.size() / n;
  auto out = make_node(sa, {a.node(), gain.node()});
  const auto& av = a.values();
  const auto& gv = gain.values();
  std::vector<double> rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double ms = 0.0;
    for (std::size_t i = 0; i < n; ++i) ms += x[i] * x[i];
    ms /= static_cast<double>(n);
    // eps acts as a lower bound on the denominator rather than an additive
    // fudge inside the sqrt, so unit-gain outputs have RMS exactly 1.
    const double r_ = std::max(std::sqrt(ms), eps);
    rms[r] = r_;
    double* y = out->value.data() + r * n;
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] / r_ * gv[i];
  }
  if (out->requires_grad) {
    out->backward_fn = [rows, n, eps, rms = std::move(rms)](Node& self) {
      Node& pa = *self.parents[0];
      Node& pg = *self.parents[1];
      if (pg.requires_grad) pg.ensure_grad();
      if (pa.requires_grad) pa.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* x = pa.value.data() + r * n;
        const double* g = self.grad.data() + r * n;
        const double* gv = pg.value.data();
        const double rr = rms[r];
        if (pg.requires_grad)
          for (std::size_t i = 0; i < n; ++i) pg.grad[i] += g[i] * x[i] / rr;
        if (!pa.requires_grad) continue;
        double* d = pa.grad.data() + r * n;
        if (rr <= eps) {  // clamped branch: plain elementwise scaling
          for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * gv[i] / rr;
        } else {
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += g[i] * gv[i] * x[i];
          const double c = dot / (static_cast<double>(n) * rr * rr * rr);
          for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * gv[i] / rr - x[i] * c;
        }
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& mask,
                   const Shape& mask_shape, double value) {
  const auto& sa = a.shape();
  if (mask.size() != shape_size(mask_shape))
    throw std::invalid_argument("masked_fill: mask length does not match " +
                                shape_str(mask_shape));
  if (mask_shape.size() > sa.size() ||
      !std::equal(mask_shape.begin(), mask_shape.end(),
                  sa.end() - static_cast<long>(mask_shape.size())))
    throw std::invalid_argument("masked_fill: mask shape " + shape_str(mask_shape) +
                                " is not a suffix of " + shape_str(sa));
  auto out = make_node(sa, {a.node()});
  const auto& av = a.values();
  const std::size_t ms = mask.size();
  for (std::size_t i = 0; i < av.size(); ++i)
    out->value[i] = mask[i % ms] ? value : av[i];
  if (out->requires_grad) {
    out->backward_fn = [mask, ms](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (!mask[i % ms]) pa.grad[i] += self.grad[i];
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  auto y = matmul(x, w);
  if (!b.defined()) return y;
  return add(y, b);
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return a;
  const double keep = 1.0 - p;
  const double inv = 1.0 / keep;
  std::vector<std::uint8_t> mask(a.size());
  for (auto& m : mask) m = rng.uniform_real() < keep ? 1 : 0;
  auto out = make_node(a.shape(), {a.node()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    out->value[i] = mask[i] ? av[i] * inv : 0.0;
  if (out->requires_grad) {
    out->backward_fn = [mask = std::move(mask), inv](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (mask[i]) pa.grad[i] += self.grad[i] * inv;
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor gather_last(const Tensor& a, const std::vector<std::size_t>& idx) {
  const auto& sa = a.shape();
  if (sa.empty()) throw std::invalid_argument("gather_last: scalar input");
  const std::size_t n = sa.back();
  const std::size_t rows = a.size() / n;
  if (idx.size() != rows)
    throw std::invalid_argument("gather_last: need " + std::to_string(rows) +
                                " indices for " + shape_str(sa) + ", got " +
                                std::to_string(idx.size()));
  for (auto i : idx)
    if (i >= n) throw std::invalid_argument("gather_last: index out of range");
  Shape out_shape(sa.begin(), sa.end() - 1);
  auto out = make_node(std::move(out_shape), {a.node()});
  const auto& av = a.values();
  for (std::size_t r = 0; r < rows; ++r) out->value[r] = av[r * n + idx[r]];
  if (out->requires_grad) {
    out->backward_fn = [idx, n](Node& self) {
      Node& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t r = 0; r < self.grad.size(); ++r)
        pa.grad[r * n + idx[r]] += self.grad[r];
    };
  }
  return Tensor::wrap(std::move(out));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  Node* root = loss.node().get();
  if (!root->requires_grad) return;  // nothing reachable requires grad

  std::vector<Node*> order;
  std::unordered_set<Node*> visited{root};
  struct Frame { Node* n; std::size_t next; };
  std::vector<Frame> stack{{root, 0}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  // Fresh grads for interior nodes; leaves (no backward_fn) accumulate.
  for (Node* n : order)
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

}  // namespace taskseq
