#pragma once

// Finite-difference checks over every differentiable building block. Shared
// by the unit tests and the acceptance runner.

#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "rpg/model/networks.hpp"
#include "rpg/nn/losses.hpp"

namespace rpg::testing {

struct NamedCheck {
  std::string name;
  GradCheckResult result;
};

namespace detail {

using nn::Shape;
using nn::Tensor;
using V = nn::Var<double>;

// Reduces a tensor-valued output to a scalar with fixed random weights, so
// every output entry contributes a distinct gradient.
inline V project(V y, std::uint64_t seed) {
  SplitMix64 rng(seed);
  auto w = random_tensor(y.shape(), rng, -1.0, 1.0);
  return nn::sum(nn::mul(y, y.tape().constant(std::move(w))));
}

}  // namespace detail

inline std::vector<NamedCheck> gradient_suite(std::size_t probes = 20) {
  using detail::project;
  using detail::Shape;
  using detail::V;
  std::vector<NamedCheck> out;
  SplitMix64 rng(20240611);
  std::uint64_t seed = 1;
  auto run = [&](const std::string& name, std::vector<nn::Tensor<double>> inputs, InputLoss f) {
    out.push_back({name, check_input_gradients(inputs, f, seed++, probes)});
  };
  auto rand = [&](Shape s, double lo = -1.0, double hi = 1.0, double gap = 0.0) {
    return random_tensor(std::move(s), rng, lo, hi, gap);
  };

  // elementwise and shape ops
  run("add/sub/mul", {rand({3, 5}), rand({3, 5})}, [&](std::vector<V>& x) {
    return project(nn::mul(nn::add(x[0], x[1]), nn::sub(x[0], x[1])), 11);
  });
  run("affine/scale/exp", {rand({4, 6})}, [&](std::vector<V>& x) {
    return project(nn::exp(nn::scale(nn::affine(x[0], 0.7, -0.2), 1.3)), 12);
  });
  run("sum/mean/reshape/slice", {rand({4, 6})}, [&](std::vector<V>& x) {
    auto r = nn::reshape(x[0], Shape{6, 4});
    return nn::add(project(nn::slice_cols(r, 1, 3), 13), nn::mean(nn::mul(x[0], x[0])));
  });

  // activations, kept away from their kinks
  run("relu", {rand({5, 8}, -1.0, 1.0, 0.05)}, [&](std::vector<V>& x) { return project(nn::relu(x[0]), 14); });
  run("leaky_relu", {rand({5, 8}, -1.0, 1.0, 0.05)},
      [&](std::vector<V>& x) { return project(nn::leaky_relu(x[0], 0.2), 15); });
  run("tanh", {rand({5, 8}, -2.0, 2.0)}, [&](std::vector<V>& x) { return project(nn::tanh(x[0]), 16); });
  run("sigmoid", {rand({5, 8}, -3.0, 3.0)}, [&](std::vector<V>& x) { return project(nn::sigmoid(x[0]), 17); });
  {
    auto t = rand({5, 8}, -1.0, 1.0);
    for (auto& v : t.span())
      if (std::abs(std::abs(v) - 0.5) < 0.05) v += 0.1;
    run("clamp", {t}, [&](std::vector<V>& x) { return project(nn::clamp(x[0], -0.5, 0.5), 18); });
  }

  // linear and convolution
  run("linear", {rand({4, 7}), rand({5, 7}), rand({5})},
      [&](std::vector<V>& x) { return project(nn::linear(x[0], x[1], std::optional<V>(x[2])), 19); });
  run("linear/no-bias", {rand({3, 6}), rand({2, 6})},
      [&](std::vector<V>& x) { return project(nn::linear(x[0], x[1]), 20); });
  run("conv2d/s1p1", {rand({2, 3, 6, 6}), rand({4, 3, 3, 3}), rand({4})}, [&](std::vector<V>& x) {
    return project(nn::conv2d(x[0], x[1], std::optional<V>(x[2]), 1, 1), 21);
  });
  run("conv2d/s2p1", {rand({2, 2, 8, 8}), rand({3, 2, 4, 4}), rand({3})}, [&](std::vector<V>& x) {
    return project(nn::conv2d(x[0], x[1], std::optional<V>(x[2]), 2, 1), 22);
  });
  run("conv2d/1x1", {rand({1, 4, 5, 5}), rand({2, 4, 1, 1})},
      [&](std::vector<V>& x) { return project(nn::conv2d(x[0], x[1], std::optional<V>{}, 1, 0), 23); });

  // resampling and channel plumbing
  run("upsample_nearest", {rand({2, 2, 3, 3})},
      [&](std::vector<V>& x) { return project(nn::upsample_nearest(x[0], 2), 24); });
  run("avgpool", {rand({2, 2, 6, 6})}, [&](std::vector<V>& x) { return project(nn::avgpool(x[0], 2), 25); });
  run("global_avg_pool", {rand({2, 3, 4, 4})},
      [&](std::vector<V>& x) { return project(nn::global_avg_pool(x[0]), 26); });
  run("concat_channels", {rand({2, 2, 3, 3}), rand({2, 3, 3, 3})},
      [&](std::vector<V>& x) { return project(nn::concat_channels(x[0], x[1]), 27); });

  // normalization and conditional modulation
  run("instance_norm", {rand({2, 3, 4, 4})},
      [&](std::vector<V>& x) { return project(nn::instance_norm(x[0], 1e-5), 28); });
  run("modulate", {rand({2, 3, 4, 4}), rand({2, 3}), rand({2, 3})},
      [&](std::vector<V>& x) { return project(nn::modulate(x[0], x[1], x[2]), 29); });
  run("l2_normalize_rows", {rand({4, 6})},
      [&](std::vector<V>& x) { return project(nn::l2_normalize_rows(x[0]), 30); });
  {
    nn::ParamStore<double> store;
    SplitMix64 init(31);
    model::CAdaIN<double> block(store, "cadain", 6, 3, init);
    const auto feat = rand({2, 3, 4, 4});
    const auto control = rand({2, 6});
    auto params = store.all();
    out.push_back({"CAdaIN/params", check_parameter_gradients(
                                        params,
                                        [&](nn::Tape<double>& tape, const nn::Binder<double>& bind) {
                                          auto y = block(bind, tape.constant(feat), tape.constant(control), 0.0, 0);
                                          return project(y, 32);
                                        },
                                        seed++, probes)});
    run("CAdaIN/inputs", {feat, control}, [&](std::vector<V>& x) {
      const nn::Binder<double> bind{x[0].tape(), false};
      return project(block(bind, x[0], x[1], 0.0, 0), 33);
    });
  }

  // training objectives
  {
    auto a = rand({3, 7}), b = rand({3, 7});
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[i]) < 0.05) a[i] += 0.1;
    run("l1_loss", {a, b}, [&](std::vector<V>& x) { return nn::l1_loss(x[0], x[1]); });
  }
  run("lsgan_discriminator_loss", {rand({2, 1, 3, 3}), rand({2, 1, 3, 3})},
      [&](std::vector<V>& x) { return nn::lsgan_discriminator_loss(x[0], x[1]); });
  run("lsgan_generator_loss", {rand({2, 1, 4, 4})},
      [&](std::vector<V>& x) { return nn::lsgan_generator_loss(x[0]); });
  run("kl_loss", {rand({4, 6}), rand({4, 6}, -2.0, 1.0)},
      [&](std::vector<V>& x) { return nn::kl_loss(x[0], x[1]); });
  run("cosine_distance_loss", {rand({3, 8}), rand({3, 8})},
      [&](std::vector<V>& x) { return nn::cosine_distance_loss(x[0], x[1]); });

  const std::vector<std::size_t> labels{0, 2, 1, 3, 2};
  run("softmax_cross_entropy", {rand({5, 4}, -3.0, 3.0)},
      [&](std::vector<V>& x) { return nn::softmax_cross_entropy(x[0], std::span(labels)); });
  run("arcface_logits", {rand({5, 4}, -0.9, 0.9)},
      [&](std::vector<V>& x) { return project(nn::arcface_logits(x[0], std::span(labels), 0.5, 4.0), 34); });
  run("arcface_loss", {rand({5, 6}), rand({4, 6})}, [&](std::vector<V>& x) {
    return nn::arcface_loss(nn::l2_normalize_rows(x[0]), x[1], std::span(labels), 0.5, 8.0);
  });
  run("arcface_loss/s48", {rand({5, 6}), rand({4, 6})}, [&](std::vector<V>& x) {
    return nn::arcface_loss(nn::l2_normalize_rows(x[0]), x[1], std::span(labels), 0.5, 48.0);
  });
  return out;
}

}  // namespace rpg::testing
