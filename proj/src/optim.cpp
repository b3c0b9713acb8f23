#include "taskseq/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace taskseq {

void zero_grads(std::vector<Parameter>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

bool AdamW::step(std::vector<Parameter>& params, double lr) {
  if (slots_.size() != params.size()) {
    slots_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots_[i].m.assign(params[i].tensor.size(), 0.0);
      slots_[i].v.assign(params[i].tensor.size(), 0.0);
    }
  }
  for (auto& p : params)
    for (double g : p.tensor.grad())
      if (!std::isfinite(g)) return false;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].tensor.values();
    const auto& grad = params[i].tensor.grad();
    auto& m = slots_[i].m;
    auto& v = slots_[i].v;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      // decoupled decay, applied to the pre-update value
      theta[j] -= lr * weight_decay_ * theta[j];
      theta[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  return true;
}

void AdamW::reset() {
  slots_.clear();
  t_ = 0;
}

double grad_check(const std::function<Tensor()>& loss_fn,
                  std::vector<Parameter>& params, double step_h,
                  std::size_t max_coords, Rng& rng) {
  zero_grads(params);
  Tensor loss = loss_fn();
  backward(loss);

  std::vector<std::vector<double>> analytic(params.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    analytic[i] = params[i].tensor.grad();
    total += analytic[i].size();
  }

  // (param, coord) probe list
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  coords.reserve(total);
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < analytic[i].size(); ++j) coords.emplace_back(i, j);
  if (coords.size() > max_coords) {
    const std::size_t want = std::max<std::size_t>(max_coords, 200);
    const auto pick = rng.sample_distinct(coords.size(), std::min(want, coords.size()));
    std::vector<std::pair<std::size_t, std::size_t>> subset;
    subset.reserve(pick.size());
    for (auto k : pick) subset.push_back(coords[k]);
    coords = std::move(subset);
  }

  double worst = 0.0;
  NoGradGuard ng;
  for (const auto& [i, j] : coords) {
    auto& theta = params[i].tensor.values();
    const double orig = theta[j];
    theta[j] = orig + step_h;
    const double up = loss_fn().item();
    theta[j] = orig - step_h;
    const double down = loss_fn().item();
    theta[j] = orig;
    const double fd = (up - down) / (2.0 * step_h);
    const double ad = analytic[i][j];
    const double rel = std::abs(ad - fd) / std::max(1e-12, std::abs(ad) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace taskseq
