#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include "rpg/nn/tensor.hpp"

namespace rpg::nn {

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments live in the Parameter.
template <class T>
void adam_step(std::span<Parameter<T>* const> params, double lr, const AdamConfig& cfg = {}) {
  for (Parameter<T>* p : params) {
    ++p->step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      const double m = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g * g;
      p->m[i] = static_cast<T>(m);
      p->v[i] = static_cast<T>(v);
      const double mhat = c1 > 0.0 ? m / c1 : m;
      const double vhat = c2 > 0.0 ? v / c2 : v;
      p->value[i] = static_cast<T>(p->value[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// Heavy-ball SGD with L2 weight decay; the velocity reuses the first-moment buffer.
template <class T>
void sgd_step(std::span<Parameter<T>* const> params, double lr, const SgdConfig& cfg = {}) {
  for (Parameter<T>* p : params) {
    ++p->step;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i] + cfg.weight_decay * p->value[i];
      const double vel = cfg.momentum * p->m[i] + g;
      p->m[i] = static_cast<T>(vel);
      p->value[i] = static_cast<T>(p->value[i] - lr * vel);
    }
  }
}

/// Constant `base` for the first half of `total` steps, then linear decay to `final_lr`.
inline double hold_then_linear_decay(std::size_t step, std::size_t total, double base, double final_lr) {
  const std::size_t hold = total / 2;
  if (step < hold || total <= hold + 1) return base;
  const double frac = static_cast<double>(step - hold) / static_cast<double>(total - hold - 1);
  return base + (final_lr - base) * std::min(frac, 1.0);
}

/// Linear warmup over `warmup` steps, then cosine from max_lr down to min_lr.
inline double warmup_cosine(std::size_t step, std::size_t total, std::size_t warmup, double max_lr, double min_lr) {
  if (step < warmup) return max_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup + 1) return max_lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup - 1);
  return min_lr + 0.5 * (max_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

}  // namespace rpg::nn
