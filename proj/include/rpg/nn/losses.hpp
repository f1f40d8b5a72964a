#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "rpg/nn/ops.hpp"

namespace rpg::nn {

/// Mean absolute difference. The subgradient at a tie is 0.
template <class T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "l1_loss");
  const auto& av = a.value();
  const auto& bv = b.value();
  T s{0};
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  const auto n = static_cast<T>(av.size());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(Tensor<T>(Shape{}, std::vector<T>{s / n}), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0] / n;
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      const T sg = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
      if (t.requires_grad(ia)) t.grad(ia)[i] += g * sg;
      if (t.requires_grad(ib)) t.grad(ib)[i] -= g * sg;
    }
  });
}

/// mean((x - target)^2)
template <class T>
Var<T> mse_to(Var<T> x, T target) {
  const auto& xv = x.value();
  T s{0};
  for (T v : xv.span()) s += (v - target) * (v - target);
  const auto n = static_cast<T>(xv.size());
  const auto ix = x.id();
  return x.tape().record(Tensor<T>(Shape{}, std::vector<T>{s / n}), {x}, [=](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const T g = t.grad(self)[0];
    const auto& xv = t.value(ix);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g * T{2} * (xv[i] - target) / n;
  });
}

/// Least-squares GAN, discriminator side: mean((D(real) - 1)^2) + mean(D(fake)^2).
template <class T>
Var<T> lsgan_discriminator_loss(Var<T> d_real, Var<T> d_fake) {
  return add(mse_to(d_real, T{1}), mse_to(d_fake, T{0}));
}

/// Least-squares GAN, generator side: mean((D(fake) - 1)^2).
template <class T>
Var<T> lsgan_generator_loss(Var<T> d_fake) {
  return mse_to(d_fake, T{1});
}

/// KL(N(mu, exp(logvar)) || N(0,1)) per latent dimension, averaged over all entries:
/// mean(-1/2 (1 + logvar - exp(logvar) - mu^2)).
template <class T>
Var<T> kl_loss(Var<T> mu, Var<T> logvar) {
  detail::require_same_shape(mu, logvar, "kl_loss");
  const auto& m = mu.value();
  const auto& lv = logvar.value();
  T s{0};
  for (std::size_t i = 0; i < m.size(); ++i) s += T(-0.5) * (T{1} + lv[i] - std::exp(lv[i]) - m[i] * m[i]);
  const auto n = static_cast<T>(m.size());
  const auto im = mu.id(), il = logvar.id();
  return mu.tape().record(Tensor<T>(Shape{}, std::vector<T>{s / n}), {mu, logvar}, [=](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0] / n;
    const auto& m = t.value(im);
    const auto& lv = t.value(il);
    if (t.requires_grad(im))
      for (std::size_t i = 0; i < m.size(); ++i) t.grad(im)[i] += g * m[i];
    if (t.requires_grad(il))
      for (std::size_t i = 0; i < m.size(); ++i) t.grad(il)[i] += g * T(-0.5) * (T{1} - std::exp(lv[i]));
  });
}

/// Identity-consistency loss: mean over rows of 1 - cos(a_i, b_i). Norms are floored at eps.
template <class T>
Var<T> cosine_distance_loss(Var<T> a, Var<T> b, T eps = T(1e-8)) {
  detail::require_same_shape(a, b, "cosine_distance_loss");
  detail::require(a.value().rank() == 2, "cosine_distance_loss: expected N x E embeddings");
  const std::size_t n = a.dim(0), e = a.dim(1);
  std::vector<T> na(n), nb(n), cs(n);
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    T dot{0}, sa{0}, sb{0};
    for (std::size_t j = 0; j < e; ++j) {
      const T x = a.value()[i * e + j], y = b.value()[i * e + j];
      dot += x * y;
      sa += x * x;
      sb += y * y;
    }
    na[i] = std::max(std::sqrt(sa), eps);
    nb[i] = std::max(std::sqrt(sb), eps);
    cs[i] = dot / (na[i] * nb[i]);
    total += T{1} - cs[i];
  }
  const auto ia = a.id(), ib = b.id();
  const auto rows = static_cast<T>(n);
  return a.tape().record(Tensor<T>(Shape{}, std::vector<T>{total / rows}), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const T g = -t.grad(self)[0] / rows;
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    for (std::size_t i = 0; i < n; ++i) {
      const bool ca = na[i] > eps, cb = nb[i] > eps;
      for (std::size_t j = 0; j < e; ++j) {
        const T x = av[i * e + j], y = bv[i * e + j];
        if (t.requires_grad(ia))
          t.grad(ia)[i * e + j] += g * (y / (na[i] * nb[i]) - (ca ? cs[i] * x / (na[i] * na[i]) : T{0}));
        if (t.requires_grad(ib))
          t.grad(ib)[i * e + j] += g * (x / (na[i] * nb[i]) - (cb ? cs[i] * y / (nb[i] * nb[i]) : T{0}));
      }
    }
  });
}

/// Mean softmax cross-entropy of N x K logits against integer labels.
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const std::size_t> labels) {
  detail::require(logits.value().rank() == 2 && logits.dim(0) == labels.size(),
                  "softmax_cross_entropy: expected N x K logits and N labels");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (auto y : labels)
    if (y >= k) throw std::invalid_argument("softmax_cross_entropy: label out of range");
  std::vector<T> prob(n * k);
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.value().data() + i * k;
    T mx = z[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j]);
    T se{0};
    for (std::size_t j = 0; j < k; ++j) se += std::exp(z[j] - mx);
    for (std::size_t j = 0; j < k; ++j) prob[i * k + j] = std::exp(z[j] - mx) / se;
    total += mx + std::log(se) - z[labels[i]];
  }
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const auto il = logits.id();
  const auto rows = static_cast<T>(n);
  return logits.tape().record(
      Tensor<T>(Shape{}, std::vector<T>{total / rows}), {logits}, [=](Tape<T>& t, std::size_t self) {
        if (!t.requires_grad(il)) return;
        const T g = t.grad(self)[0] / rows;
        auto& gz = t.grad(il);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j)
            gz[i * k + j] += g * (prob[i * k + j] - (j == lab[i] ? T{1} : T{0}));
      });
}

/// Additive angular margin on cosine logits: s*cos(theta_j) for j != y and
/// s*cos(theta_y + m) for the labelled class, with cos clamped to
/// [-1 + 1e-7, 1 - 1e-7] before acos (zero gradient outside the clamp).
template <class T>
Var<T> arcface_logits(Var<T> cosines, std::span<const std::size_t> labels, T margin, T scale_s) {
  detail::require(cosines.value().rank() == 2 && cosines.dim(0) == labels.size(),
                  "arcface_logits: expected N x K cosines and N labels");
  const std::size_t n = cosines.dim(0), k = cosines.dim(1);
  for (auto y : labels)
    if (y >= k) throw std::invalid_argument("arcface_logits: label out of range");
  const T lo = T(-1) + T(1e-7), hi = T(1) - T(1e-7);
  Tensor<T> out(cosines.shape());
  std::vector<T> target_grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = scale_s * cosines.value()[i * k + j];
    const T c = cosines.value()[i * k + labels[i]];
    const T cc = std::clamp(c, lo, hi);
    const T theta = std::acos(cc);
    out[i * k + labels[i]] = scale_s * std::cos(theta + margin);
    target_grad[i] = (c >= lo && c <= hi) ? scale_s * std::sin(theta + margin) / std::sin(theta) : T{0};
  }
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const auto ic = cosines.id();
  return cosines.tape().record(std::move(out), {cosines}, [=](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ic)) return;
    const auto& g = t.grad(self);
    auto& gc = t.grad(ic);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j)
        gc[i * k + j] += g[i * k + j] * (j == lab[i] ? target_grad[i] : scale_s);
  });
}

/// ArcFace objective: features (N x E, unit norm) against class weights (K x E, normalized here).
template <class T>
Var<T> arcface_loss(Var<T> features, Var<T> class_weights, std::span<const std::size_t> labels, T margin,
                    T scale_s) {
  const auto cosines = linear(features, l2_normalize_rows(class_weights));
  return softmax_cross_entropy(arcface_logits(cosines, labels, margin, scale_s), labels);
}

}  // namespace rpg::nn
