#pragma once

// Crease-conditioned palmprint generator (UNet with CAdaIN modulation), the
// palmprint encoder that maps B to a Gaussian posterior, and the patch
// discriminator. All three share one ParamStore under "gen.", "enc." and
// "disc." prefixes so a single checkpoint captures the model.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpg/core/image.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/model/convert.hpp"
#include "rpg/nn/layers.hpp"
#include "rpg/nn/losses.hpp"

namespace rpg::model {

struct GeneratorConfig {
  std::size_t image_size = 64;
  std::size_t base_channels = 16;
  std::size_t num_scales = 3;
  std::size_t latent_dim = 8;
  std::size_t control_dim = 32;
  double noise_std = 0.02;
  std::size_t disc_channels = 16;
  double leaky_slope = 0.2;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

inline void validate(const GeneratorConfig& c) {
  if (c.num_scales == 0 || c.base_channels == 0 || c.latent_dim == 0 || c.control_dim == 0 || c.disc_channels == 0)
    throw std::invalid_argument("GeneratorConfig: zero-sized dimension");
  if (c.image_size == 0 || c.image_size % (std::size_t{1} << c.num_scales) != 0)
    throw std::invalid_argument("GeneratorConfig: image_size must be divisible by 2^num_scales");
  if (c.image_size < 8) throw std::invalid_argument("GeneratorConfig: image_size must be >= 8");
  if (c.noise_std < 0.0) throw std::invalid_argument("GeneratorConfig: negative noise_std");
}

inline std::size_t channels_at(const GeneratorConfig& c, std::size_t level) {
  return c.base_channels << std::min<std::size_t>(level, 2);
}

/// Conditional adaptive instance normalization:
///   out = f_scale(w) * standardize(x) + f_shift(w) + n0,  n0 ~ N(0, noise_std^2) per pixel.
/// The scale head's bias starts at 1 so an untrained block is close to plain standardization.
template <class T>
struct CAdaIN {
  nn::Linear<T> to_scale;
  nn::Linear<T> to_shift;
  std::size_t channels = 0;

  CAdaIN() = default;
  CAdaIN(nn::ParamStore<T>& store, const std::string& name, std::size_t control_dim, std::size_t channels_,
         SplitMix64& rng)
      : to_scale(store, name + ".scale", control_dim, channels_, rng),
        to_shift(store, name + ".shift", control_dim, channels_, rng),
        channels(channels_) {
    to_scale.bias->value.fill(T{1});
    to_shift.bias->value.fill(T{0});
  }

  nn::Var<T> operator()(const nn::Binder<T>& bind, nn::Var<T> x, nn::Var<T> control, double noise_std,
                        std::uint64_t noise_seed) const {
    if (x.value().rank() != 4 || x.dim(1) != channels)
      throw std::invalid_argument("CAdaIN: feature map has " + (x.value().rank() == 4 ? std::to_string(x.dim(1)) : "?") +
                                  " channels, modulation heads expect " + std::to_string(channels));
    if (control.value().rank() != 2 || control.dim(0) != x.dim(0))
      throw std::invalid_argument("CAdaIN: control batch does not match feature batch");
    auto y = nn::modulate(nn::instance_norm(x, T(1e-5)), to_scale(bind, control), to_shift(bind, control));
    if (noise_std > 0.0) {
      auto noise = standard_normal<T>(x.shape(), noise_seed);
      for (auto& v : noise.span()) v *= static_cast<T>(noise_std);
      y = nn::add(y, x.tape().constant(std::move(noise)));
    }
    return y;
  }
};

template <class T>
class Generator {
 public:
  Generator(nn::ParamStore<T>& store, const GeneratorConfig& cfg, SplitMix64& rng) : cfg_(cfg) {
    validate(cfg);
    fc1_ = nn::Linear<T>(store, "gen.control.fc1", cfg.latent_dim, cfg.control_dim, rng);
    fc2_ = nn::Linear<T>(store, "gen.control.fc2", cfg.control_dim, cfg.control_dim, rng);
    const std::size_t c0 = channels_at(cfg, 0);
    stem_ = nn::Conv2d<T>(store, "gen.stem", 1, c0, 3, 1, 1, rng);
    stem_mod_ = CAdaIN<T>(store, "gen.stem.cadain", cfg.control_dim, c0, rng);
    for (std::size_t i = 0; i < cfg.num_scales; ++i) {
      const std::string n = "gen.down" + std::to_string(i);
      down_.emplace_back(store, n, channels_at(cfg, i), channels_at(cfg, i + 1), 3, 2, 1, rng);
      down_mod_.emplace_back(store, n + ".cadain", cfg.control_dim, channels_at(cfg, i + 1), rng);
    }
    const std::size_t cb = channels_at(cfg, cfg.num_scales);
    bottleneck_ = nn::Conv2d<T>(store, "gen.bottleneck", cb, cb, 3, 1, 1, rng);
    bottleneck_mod_ = CAdaIN<T>(store, "gen.bottleneck.cadain", cfg.control_dim, cb, rng);
    for (std::size_t i = cfg.num_scales; i-- > 0;) {
      const std::string n = "gen.up" + std::to_string(i);
      const std::size_t in = channels_at(cfg, i + 1) + channels_at(cfg, i);
      up_.emplace_back(store, n, in, channels_at(cfg, i), 3, 1, 1, rng);
      up_mod_.emplace_back(store, n + ".cadain", cfg.control_dim, channels_at(cfg, i), rng);
    }
    head_ = nn::Conv2d<T>(store, "gen.head", c0, 1, 3, 1, 1, rng);
  }

  const GeneratorConfig& config() const noexcept { return cfg_; }

  /// Shared control vector w(z) = lrelu(fc2(lrelu(fc1(z)))).
  nn::Var<T> control(const nn::Binder<T>& bind, nn::Var<T> z) const {
    const T s = static_cast<T>(cfg_.leaky_slope);
    return nn::leaky_relu(fc2_(bind, nn::leaky_relu(fc1_(bind, z), s)), s);
  }

  /// crease: N x 1 x S x S in [0,1]; z: N x d_z. Returns N x 1 x S x S in [0,1].
  nn::Var<T> forward(const nn::Binder<T>& bind, nn::Var<T> crease, nn::Var<T> z, std::uint64_t noise_seed) const {
    check_input(crease);
    if (z.value().rank() != 2 || z.dim(0) != crease.dim(0) || z.dim(1) != cfg_.latent_dim)
      throw std::invalid_argument("Generator: latent must be N x " + std::to_string(cfg_.latent_dim));
    const T s = static_cast<T>(cfg_.leaky_slope);
    const double ns = cfg_.noise_std;
    std::uint64_t block = 0;
    auto nseed = [&] { return derive_seed(noise_seed, seed_domain::noise, block++); };

    const auto w = control(bind, z);
    auto x = nn::affine(crease, T{2}, T{-1});
    x = nn::leaky_relu(stem_mod_(bind, stem_(bind, x), w, ns, nseed()), s);
    std::vector<nn::Var<T>> skips{x};
    for (std::size_t i = 0; i < down_.size(); ++i) {
      x = nn::leaky_relu(down_mod_[i](bind, down_[i](bind, x), w, ns, nseed()), s);
      skips.push_back(x);
    }
    x = nn::leaky_relu(bottleneck_mod_(bind, bottleneck_(bind, x), w, ns, nseed()), s);
    for (std::size_t j = 0; j < up_.size(); ++j) {
      const std::size_t level = cfg_.num_scales - 1 - j;
      x = nn::concat_channels(nn::upsample_nearest(x, 2), skips[level]);
      x = nn::leaky_relu(up_mod_[j](bind, up_[j](bind, x), w, ns, nseed()), s);
    }
    return nn::affine(nn::tanh(head_(bind, x)), T(0.5), T(0.5));
  }

  void check_input(nn::Var<T> img) const {
    const auto& sh = img.shape();
    if (sh.size() != 4 || sh[1] != 1 || sh[2] != cfg_.image_size || sh[3] != cfg_.image_size)
      throw std::invalid_argument("expected N x 1 x " + std::to_string(cfg_.image_size) + " x " +
                                  std::to_string(cfg_.image_size) + " image batch, got " + nn::shape_string(sh));
  }

 private:
  GeneratorConfig cfg_;
  nn::Linear<T> fc1_, fc2_;
  nn::Conv2d<T> stem_;
  CAdaIN<T> stem_mod_;
  std::vector<nn::Conv2d<T>> down_;
  std::vector<CAdaIN<T>> down_mod_;
  nn::Conv2d<T> bottleneck_;
  CAdaIN<T> bottleneck_mod_;
  std::vector<nn::Conv2d<T>> up_;
  std::vector<CAdaIN<T>> up_mod_;
  nn::Conv2d<T> head_;
};

template <class T>
struct EncoderOutput {
  nn::Var<T> mu;
  nn::Var<T> logvar;
};

/// Residual downsampling encoder: each block is
///   avgpool(conv(lrelu(conv(lrelu(x))))) + conv1x1(avgpool(x)).
template <class T>
class Encoder {
 public:
  Encoder(nn::ParamStore<T>& store, const GeneratorConfig& cfg, SplitMix64& rng) : cfg_(cfg) {
    validate(cfg);
    stem_ = nn::Conv2d<T>(store, "enc.stem", 1, channels_at(cfg, 0), 3, 1, 1, rng);
    for (std::size_t i = 0; i < cfg.num_scales; ++i) {
      const std::string n = "enc.block" + std::to_string(i);
      const std::size_t cin = channels_at(cfg, i), cout = channels_at(cfg, i + 1);
      Block b;
      b.conv1 = nn::Conv2d<T>(store, n + ".conv1", cin, cin, 3, 1, 1, rng);
      b.conv2 = nn::Conv2d<T>(store, n + ".conv2", cin, cout, 3, 1, 1, rng);
      b.shortcut = nn::Conv2d<T>(store, n + ".shortcut", cin, cout, 1, 1, 0, rng);
      blocks_.push_back(b);
    }
    const std::size_t grid = cfg.image_size >> cfg.num_scales;
    head_ = nn::Linear<T>(store, "enc.head", channels_at(cfg, cfg.num_scales) * grid * grid, 2 * cfg.latent_dim, rng);
  }

  EncoderOutput<T> forward(const nn::Binder<T>& bind, nn::Var<T> image) const {
    const auto& sh = image.shape();
    if (sh.size() != 4 || sh[1] != 1 || sh[2] != cfg_.image_size || sh[3] != cfg_.image_size)
      throw std::invalid_argument("Encoder: expected N x 1 x " + std::to_string(cfg_.image_size) + " x " +
                                  std::to_string(cfg_.image_size) + ", got " + nn::shape_string(sh));
    const T s = static_cast<T>(cfg_.leaky_slope);
    auto x = stem_(bind, nn::affine(image, T{2}, T{-1}));
    for (const auto& b : blocks_) {
      auto main = b.conv2(bind, nn::leaky_relu(b.conv1(bind, nn::leaky_relu(x, s)), s));
      x = nn::add(nn::avgpool(main, 2), b.shortcut(bind, nn::avgpool(x, 2)));
    }
    x = nn::leaky_relu(x, s);
    const std::size_t n = sh[0];
    const auto flat = nn::reshape(x, {n, x.value().size() / n});
    const auto params = head_(bind, flat);
    const std::size_t d = cfg_.latent_dim;
    return {nn::slice_cols(params, 0, d), nn::clamp(nn::slice_cols(params, d, 2 * d), T{-10}, T{10})};
  }

 private:
  struct Block {
    nn::Conv2d<T> conv1, conv2, shortcut;
  };
  GeneratorConfig cfg_;
  nn::Conv2d<T> stem_;
  std::vector<Block> blocks_;
  nn::Linear<T> head_;
};

/// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) drawn from `seed`.
template <class T>
nn::Var<T> reparameterize(const EncoderOutput<T>& e, std::uint64_t seed) {
  auto eps = e.mu.tape().constant(standard_normal<T>(e.mu.shape(), seed));
  return nn::add(e.mu, nn::mul(nn::exp(nn::scale(e.logvar, T(0.5))), eps));
}

/// Patch discriminator: two stride-2 4x4 convs and a 3x3 scoring conv, giving
/// an (S/4) x (S/4) grid whose cells each see an 18 x 18 input window.
template <class T>
class Discriminator {
 public:
  Discriminator(nn::ParamStore<T>& store, const GeneratorConfig& cfg, SplitMix64& rng) : cfg_(cfg) {
    const std::size_t c = cfg.disc_channels;
    conv1_ = nn::Conv2d<T>(store, "disc.conv1", 1, c, 4, 2, 1, rng);
    conv2_ = nn::Conv2d<T>(store, "disc.conv2", c, 2 * c, 4, 2, 1, rng);
    score_ = nn::Conv2d<T>(store, "disc.score", 2 * c, 1, 3, 1, 1, rng);
  }

  std::size_t grid_size() const noexcept { return cfg_.image_size / 4; }

  nn::Var<T> forward(const nn::Binder<T>& bind, nn::Var<T> image) const {
    const T s = static_cast<T>(cfg_.leaky_slope);
    auto x = nn::leaky_relu(conv1_(bind, nn::affine(image, T{2}, T{-1})), s);
    x = nn::leaky_relu(conv2_(bind, x), s);
    return score_(bind, x);
  }

 private:
  GeneratorConfig cfg_;
  nn::Conv2d<T> conv1_, conv2_, score_;
};

/// Generator, encoder and discriminator with one parameter store.
template <class T>
class RpgModel {
 public:
  RpgModel(const GeneratorConfig& cfg, std::uint64_t init_seed)
      : cfg_((validate(cfg), cfg)), rng_(init_seed), gen_(store_, cfg, rng_), enc_(store_, cfg, rng_), disc_(store_, cfg, rng_) {}

  RpgModel(const RpgModel&) = delete;
  RpgModel& operator=(const RpgModel&) = delete;

  const GeneratorConfig& config() const noexcept { return cfg_; }
  nn::ParamStore<T>& params() noexcept { return store_; }
  const nn::ParamStore<T>& params() const noexcept { return store_; }
  const Generator<T>& generator() const noexcept { return gen_; }
  const Encoder<T>& encoder() const noexcept { return enc_; }
  const Discriminator<T>& discriminator() const noexcept { return disc_; }

  /// Forward generation of one palmprint from a crease condition and latent code.
  GrayImage generate(const GrayImage& crease, std::span<const T> z, std::uint64_t noise_seed) const {
    nn::Tape<T> tape;
    const nn::Binder<T> bind{tape, false};
    if (z.size() != cfg_.latent_dim) throw std::invalid_argument("generate: latent has wrong length");
    auto zt = tape.constant(nn::Tensor<T>({1, cfg_.latent_dim}, std::vector<T>(z.begin(), z.end())));
    const auto out = gen_.forward(bind, tape.constant(image_to_tensor<T>(crease)), zt, noise_seed);
    return tensor_to_image(out.value());
  }

  struct Posterior {
    std::vector<T> mu;
    std::vector<T> logvar;
  };
  Posterior encode(const GrayImage& b) const {
    nn::Tape<T> tape;
    const nn::Binder<T> bind{tape, false};
    const auto e = enc_.forward(bind, tape.constant(image_to_tensor<T>(b)));
    return {e.mu.value().vec(), e.logvar.value().vec()};
  }

  nn::Tensor<T> discriminate(const GrayImage& img) const {
    nn::Tape<T> tape;
    const nn::Binder<T> bind{tape, false};
    return disc_.forward(bind, tape.constant(image_to_tensor<T>(img))).value();
  }

 private:
  GeneratorConfig cfg_;
  nn::ParamStore<T> store_;
  SplitMix64 rng_;
  Generator<T> gen_;
  Encoder<T> enc_;
  Discriminator<T> disc_;
};

}  // namespace rpg::model
