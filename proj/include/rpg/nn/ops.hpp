#pragma once

// Differentiable operations recorded on a Tape. Layout conventions: images are
// NCHW, dense activations are N x F, conv weights are O x C x k x k, linear
// weights are G x F (PyTorch layout).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpg/nn/tape.hpp"

namespace rpg::nn {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

/// Dot product with eight interleaved partial sums so the compiler can
/// vectorize it without reassociating floating point on its own.
template <class T>
T dot(const T* a, const T* b, std::size_t n) noexcept {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

template <class T, class F>
Var<T> unary(Var<T> x, F&& f, std::function<T(T x, T y)> dydx) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, dydx](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(xid)) return;
    const auto& g = t.grad(self);
    const auto& xv = t.value(xid);
    const auto& yv = t.value(self);
    auto& gx = t.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xv[i], yv[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  out += b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) += g;
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "sub");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "mul");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      const auto& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      const auto& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

/// y = alpha * x + beta
template <class T>
Var<T> affine(Var<T> x, T alpha, T beta) {
  return detail::unary<T>(x, [=](T v) { return alpha * v + beta; }, [=](T, T) { return alpha; });
}

template <class T>
Var<T> scale(Var<T> x, T alpha) {
  return affine(x, alpha, T{0});
}

template <class T>
Var<T> exp(Var<T> x) {
  return detail::unary<T>(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> relu(Var<T> x) {
  return detail::unary<T>(x, [](T v) { return v > T{0} ? v : T{0}; },
                          [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <class T>
Var<T> leaky_relu(Var<T> x, T slope) {
  return detail::unary<T>(x, [=](T v) { return v > T{0} ? v : slope * v; },
                          [=](T v, T) { return v > T{0} ? T{1} : slope; });
}

template <class T>
Var<T> tanh(Var<T> x) {
  return detail::unary<T>(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary<T>(x, [](T v) { return T{1} / (T{1} + std::exp(-v)); },
                          [](T, T y) { return y * (T{1} - y); });
}

/// Gradient passes where lo <= x <= hi and is zero outside.
template <class T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return detail::unary<T>(x, [=](T v) { return std::clamp(v, lo, hi); },
                          [=](T v, T) { return (v >= lo && v <= hi) ? T{1} : T{0}; });
}

// ---------------------------------------------------------------- reductions

template <class T>
Var<T> sum(Var<T> x) {
  T s{0};
  for (T v : x.value().span()) s += v;
  const auto ix = x.id();
  return x.tape().record(Tensor<T>(Shape{}, std::vector<T>{s}), {x}, [ix](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const T g = t.grad(self)[0];
    for (auto& v : t.grad(ix).span()) v += g;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  const auto n = static_cast<T>(x.value().size());
  return scale(sum(x), T{1} / n);
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Columns [begin, end) of an N x F matrix.
template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  detail::require(x.value().rank() == 2 && begin < end && end <= x.dim(1), "slice_cols: bad range");
  const std::size_t n = x.dim(0), f = x.dim(1), w = end - begin;
  Tensor<T> out({n, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.value()[i * f + begin + j];
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * f + begin + j] += g[i * w + j];
  });
}

// ---------------------------------------------------------------- affine maps

/// y = x W^T + b. x: N x F, w: G x F, b: G (optional).
template <class T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b = std::nullopt) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  detail::require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1),
                  "linear: expected x N x F and w G x F, got " + shape_string(xv.shape()) + " and " +
                      shape_string(wv.shape()));
  const std::size_t n = xv.dim(0), f = xv.dim(1), g = wv.dim(0);
  if (b) detail::require(b->value().size() == g, "linear: bias length mismatch");
  Tensor<T> out({n, g});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < g; ++o) {
      const T bias = b ? b->value()[o] : T{0};
      out[i * g + o] = bias + detail::dot(xv.data() + i * f, wv.data() + o * f, f);
    }
  }
  const auto ix = x.id(), iw = w.id();
  const std::optional<std::size_t> ib = b ? std::optional<std::size_t>(b->id()) : std::nullopt;
  auto fn = [=](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    const auto& xv = t.value(ix);
    const auto& wv = t.value(iw);
    if (t.requires_grad(ix)) {
      auto& gx = t.grad(ix);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < g; ++o) {
          const T go = gy[i * g + o];
          const T* wr = wv.data() + o * f;
          T* gxr = gx.data() + i * f;
          for (std::size_t k = 0; k < f; ++k) gxr[k] += go * wr[k];
        }
    }
    if (t.requires_grad(iw)) {
      auto& gw = t.grad(iw);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < g; ++o) {
          const T go = gy[i * g + o];
          const T* xr = xv.data() + i * f;
          T* gwr = gw.data() + o * f;
          for (std::size_t k = 0; k < f; ++k) gwr[k] += go * xr[k];
        }
    }
    if (ib && t.requires_grad(*ib)) {
      auto& gb = t.grad(*ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < g; ++o) gb[o] += gy[i * g + o];
    }
  };
  if (b) return x.tape().record(std::move(out), {x, w, *b}, fn);
  return x.tape().record(std::move(out), {x, w}, fn);
}

namespace detail {

struct ConvGeometry {
  std::size_t c, h, w, k, stride, pad, oh, ow;
  std::size_t rows() const noexcept { return c * k * k; }
  std::size_t cols() const noexcept { return oh * ow; }
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, std::vector<T>& col) {
  col.assign(g.rows() * g.cols(), T{0});
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = col.data() + ((ci * g.k + ki) * g.k + kj) * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = long(oy * g.stride + ki) - long(g.pad);
          if (iy < 0 || iy >= long(g.h)) continue;
          const T* xrow = x + (ci * g.h + std::size_t(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = long(ox * g.stride + kj) - long(g.pad);
            if (ix < 0 || ix >= long(g.w)) continue;
            row[oy * g.ow + ox] = xrow[ix];
          }
        }
      }
}

template <class T>
void col2im_add(const std::vector<T>& col, const ConvGeometry& g, T* dx) {
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = col.data() + ((ci * g.k + ki) * g.k + kj) * g.cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = long(oy * g.stride + ki) - long(g.pad);
          if (iy < 0 || iy >= long(g.h)) continue;
          T* dxrow = dx + (ci * g.h + std::size_t(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = long(ox * g.stride + kj) - long(g.pad);
            if (ix < 0 || ix >= long(g.w)) continue;
            dxrow[ix] += row[oy * g.ow + ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation. x: N x C x H x W, w: O x C x k x k, b: O.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, std::optional<Var<T>> b, std::size_t stride, std::size_t pad) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  detail::require(xv.rank() == 4 && wv.rank() == 4, "conv2d: expected 4-D input and weight");
  detail::require(stride >= 1, "conv2d: stride must be >= 1");
  detail::require(wv.dim(1) == xv.dim(1), "conv2d: channel mismatch, input has " + std::to_string(xv.dim(1)) +
                                              " but weight expects " + std::to_string(wv.dim(1)));
  detail::require(wv.dim(2) == wv.dim(3), "conv2d: kernel must be square");
  const std::size_t n = xv.dim(0), o = wv.dim(0), k = wv.dim(2);
  detail::require(xv.dim(2) + 2 * pad >= k && xv.dim(3) + 2 * pad >= k, "conv2d: kernel larger than padded input");
  if (b) detail::require(b->value().size() == o, "conv2d: bias length mismatch");
  const detail::ConvGeometry geo{xv.dim(1), xv.dim(2), xv.dim(3), k, stride, pad,
                                 (xv.dim(2) + 2 * pad - k) / stride + 1, (xv.dim(3) + 2 * pad - k) / stride + 1};
  const std::size_t q = geo.rows(), p = geo.cols();

  Tensor<T> out({n, o, geo.oh, geo.ow});
  std::vector<T> col;
  for (std::size_t s = 0; s < n; ++s) {
    detail::im2col(xv.data() + s * geo.c * geo.h * geo.w, geo, col);
    for (std::size_t oc = 0; oc < o; ++oc) {
      T* orow = out.data() + (s * o + oc) * p;
      std::fill(orow, orow + p, b ? b->value()[oc] : T{0});
      const T* wr = wv.data() + oc * q;
      for (std::size_t r = 0; r < q; ++r) {
        const T wgt = wr[r];
        const T* crow = col.data() + r * p;
        for (std::size_t j = 0; j < p; ++j) orow[j] += wgt * crow[j];
      }
    }
  }

  const auto ix = x.id(), iw = w.id();
  const std::optional<std::size_t> ib = b ? std::optional<std::size_t>(b->id()) : std::nullopt;
  auto fn = [=](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    const auto& xv = t.value(ix);
    const auto& wv = t.value(iw);
    const bool need_x = t.requires_grad(ix), need_w = t.requires_grad(iw);
    std::vector<T> col, dcol;
    for (std::size_t s = 0; s < n; ++s) {
      const T* g = gy.data() + s * o * p;
      if (need_w) {
        detail::im2col(xv.data() + s * geo.c * geo.h * geo.w, geo, col);
        auto& gw = t.grad(iw);
        for (std::size_t oc = 0; oc < o; ++oc) {
          const T* grow = g + oc * p;
          T* gwr = gw.data() + oc * q;
          for (std::size_t r = 0; r < q; ++r) {
            gwr[r] += detail::dot(grow, col.data() + r * p, p);
          }
        }
      }
      if (ib && t.requires_grad(*ib)) {
        auto& gb = t.grad(*ib);
        for (std::size_t oc = 0; oc < o; ++oc) {
          T acc{0};
          for (std::size_t j = 0; j < p; ++j) acc += g[oc * p + j];
          gb[oc] += acc;
        }
      }
      if (need_x) {
        dcol.assign(q * p, T{0});
        for (std::size_t oc = 0; oc < o; ++oc) {
          const T* grow = g + oc * p;
          const T* wr = wv.data() + oc * q;
          for (std::size_t r = 0; r < q; ++r) {
            const T wgt = wr[r];
            T* drow = dcol.data() + r * p;
            for (std::size_t j = 0; j < p; ++j) drow[j] += wgt * grow[j];
          }
        }
        detail::col2im_add(dcol, geo, t.grad(ix).data() + s * geo.c * geo.h * geo.w);
      }
    }
  };
  if (b) return x.tape().record(std::move(out), {x, w, *b}, fn);
  return x.tape().record(std::move(out), {x, w}, fn);
}

// ---------------------------------------------------------------- resampling

template <class T>
Var<T> upsample_nearest(Var<T> x, std::size_t factor) {
  detail::require(x.value().rank() == 4 && factor >= 1, "upsample_nearest: expected NCHW and factor >= 1");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor<T> out({x.dim(0), x.dim(1), oh, ow});
  const auto& xv = x.value();
  for (std::size_t m = 0; m < nc; ++m)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) out[(m * oh + i) * ow + j] = xv[(m * h + i / factor) * w + j / factor];
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t m = 0; m < nc; ++m)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) gx[(m * h + i / factor) * w + j / factor] += g[(m * oh + i) * ow + j];
  });
}

/// Non-overlapping k x k mean pooling (stride k); trailing rows/cols that do not fill a window are dropped.
template <class T>
Var<T> avgpool(Var<T> x, std::size_t k) {
  detail::require(x.value().rank() == 4 && k >= 1, "avgpool: expected NCHW and k >= 1");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / k, ow = w / k;
  detail::require(oh > 0 && ow > 0, "avgpool: window larger than input");
  const T inv = T{1} / static_cast<T>(k * k);
  Tensor<T> out({x.dim(0), x.dim(1), oh, ow});
  const auto& xv = x.value();
  for (std::size_t m = 0; m < nc; ++m)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        T s{0};
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) s += xv[(m * h + i * k + a) * w + j * k + b];
        out[(m * oh + i) * ow + j] = s * inv;
      }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t m = 0; m < nc; ++m)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const T gv = g[(m * oh + i) * ow + j] * inv;
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) gx[(m * h + i * k + a) * w + j * k + b] += gv;
        }
  });
}

/// N x C x H x W -> N x C spatial mean.
template <class T>
Var<T> global_avg_pool(Var<T> x) {
  detail::require(x.value().rank() == 4, "global_avg_pool: expected NCHW");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, c});
  const auto& xv = x.value();
  for (std::size_t m = 0; m < n * c; ++m) {
    T s{0};
    for (std::size_t i = 0; i < hw; ++i) s += xv[m * hw + i];
    out[m] = s / static_cast<T>(hw);
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t m = 0; m < n * c; ++m) {
      const T gv = g[m] / static_cast<T>(hw);
      for (std::size_t i = 0; i < hw; ++i) gx[m * hw + i] += gv;
    }
  });
}

template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  detail::require(a.value().rank() == 4 && b.value().rank() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
                      a.dim(3) == b.dim(3),
                  "concat_channels: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.value().data() + s * ca * hw, ca * hw, out.data() + s * (ca + cb) * hw);
    std::copy_n(b.value().data() + s * cb * hw, cb * hw, out.data() + s * (ca + cb) * hw + ca * hw);
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t s = 0; s < n; ++s) {
      const T* gs = g.data() + s * (ca + cb) * hw;
      if (t.requires_grad(ia)) {
        T* ga = t.grad(ia).data() + s * ca * hw;
        for (std::size_t i = 0; i < ca * hw; ++i) ga[i] += gs[i];
      }
      if (t.requires_grad(ib)) {
        T* gb = t.grad(ib).data() + s * cb * hw;
        for (std::size_t i = 0; i < cb * hw; ++i) gb[i] += gs[ca * hw + i];
      }
    }
  });
}

// ---------------------------------------------------------------- normalization

/// Per (sample, channel) standardization: (x - mean) / sqrt(var + eps), biased variance.
template <class T>
Var<T> instance_norm(Var<T> x, T eps = T(1e-5)) {
  detail::require(x.value().rank() == 4, "instance_norm: expected NCHW");
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  std::vector<T> inv_std(nc);
  const auto& xv = x.value();
  for (std::size_t m = 0; m < nc; ++m) {
    const T* xs = xv.data() + m * hw;
    T mu{0};
    for (std::size_t i = 0; i < hw; ++i) mu += xs[i];
    mu /= static_cast<T>(hw);
    T var{0};
    for (std::size_t i = 0; i < hw; ++i) var += (xs[i] - mu) * (xs[i] - mu);
    var /= static_cast<T>(hw);
    inv_std[m] = T{1} / std::sqrt(var + eps);
    for (std::size_t i = 0; i < hw; ++i) out[m * hw + i] = (xs[i] - mu) * inv_std[m];
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(ix);
    for (std::size_t m = 0; m < nc; ++m) {
      T gm{0}, gym{0};
      for (std::size_t i = 0; i < hw; ++i) {
        gm += g[m * hw + i];
        gym += g[m * hw + i] * y[m * hw + i];
      }
      gm /= static_cast<T>(hw);
      gym /= static_cast<T>(hw);
      for (std::size_t i = 0; i < hw; ++i)
        gx[m * hw + i] += inv_std[m] * (g[m * hw + i] - gm - y[m * hw + i] * gym);
    }
  });
}

/// y[n,c,:,:] = scale[n,c] * x[n,c,:,:] + shift[n,c]
template <class T>
Var<T> modulate(Var<T> x, Var<T> scale_nc, Var<T> shift_nc) {
  detail::require(x.value().rank() == 4, "modulate: expected NCHW");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Shape want{n, c};
  detail::require(scale_nc.shape() == want && shift_nc.shape() == want,
                  "modulate: expected N x C modulation (" + shape_string(want) + "), got " +
                      shape_string(scale_nc.shape()) + " and " + shape_string(shift_nc.shape()));
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t m = 0; m < n * c; ++m)
    for (std::size_t i = 0; i < hw; ++i)
      out[m * hw + i] = scale_nc.value()[m] * xv[m * hw + i] + shift_nc.value()[m];
  const auto ix = x.id(), isc = scale_nc.id(), ish = shift_nc.id();
  return x.tape().record(std::move(out), {x, scale_nc, shift_nc}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ix);
    const auto& sv = t.value(isc);
    const bool nx = t.requires_grad(ix), ns = t.requires_grad(isc), nh = t.requires_grad(ish);
    for (std::size_t m = 0; m < n * c; ++m) {
      T gs{0}, gh{0};
      for (std::size_t i = 0; i < hw; ++i) {
        gs += g[m * hw + i] * xv[m * hw + i];
        gh += g[m * hw + i];
      }
      if (ns) t.grad(isc)[m] += gs;
      if (nh) t.grad(ish)[m] += gh;
      if (nx) {
        auto& gx = t.grad(ix);
        for (std::size_t i = 0; i < hw; ++i) gx[m * hw + i] += g[m * hw + i] * sv[m];
      }
    }
  });
}

/// Row-wise x / max(||x||, eps) for an N x E matrix.
template <class T>
Var<T> l2_normalize_rows(Var<T> x, T eps = T(1e-12)) {
  detail::require(x.value().rank() == 2, "l2_normalize_rows: expected N x E");
  const std::size_t n = x.dim(0), e = x.dim(1);
  Tensor<T> out(x.shape());
  std::vector<T> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s{0};
    for (std::size_t j = 0; j < e; ++j) s += x.value()[i * e + j] * x.value()[i * e + j];
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < e; ++j) out[i * e + j] = x.value()[i * e + j] / norms[i];
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < n; ++i) {
      const bool clamped = !(norms[i] > eps);
      T dot{0};
      if (!clamped)
        for (std::size_t j = 0; j < e; ++j) dot += y[i * e + j] * g[i * e + j];
      for (std::size_t j = 0; j < e; ++j) gx[i * e + j] += (g[i * e + j] - y[i * e + j] * dot) / norms[i];
    }
  });
}

}  // namespace rpg::nn
