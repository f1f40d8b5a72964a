#pragma once

// Embedding backbone and margin head shared by the frozen identity extractor
// and the downstream recognizer: four stride-2 conv blocks (conv, instance
// norm, leaky ReLU), global average pooling, a linear projection and L2
// normalization.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpg/core/image.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/model/convert.hpp"
#include "rpg/nn/checkpoint.hpp"
#include "rpg/nn/layers.hpp"
#include "rpg/nn/losses.hpp"

namespace rpg::recog {

struct EmbeddingConfig {
  std::size_t base_channels = 16;
  std::size_t embedding_dim = 64;
  double leaky_slope = 0.2;
  friend bool operator==(const EmbeddingConfig&, const EmbeddingConfig&) = default;
};

template <class T>
class EmbeddingModel {
 public:
  EmbeddingModel(const EmbeddingConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg.base_channels == 0 || cfg.embedding_dim == 0) throw std::invalid_argument("EmbeddingModel: zero width");
    SplitMix64 rng(init_seed);
    const std::size_t b = cfg.base_channels;
    const std::array<std::size_t, 5> ch{1, b, 2 * b, 4 * b, 4 * b};
    for (std::size_t i = 0; i < 4; ++i)
      blocks_[i] = nn::Conv2d<T>(store_, "backbone.block" + std::to_string(i), ch[i], ch[i + 1], 3, 2, 1, rng);
    proj_ = nn::Linear<T>(store_, "backbone.proj", ch[4], cfg.embedding_dim, rng);
  }

  EmbeddingModel(const EmbeddingModel&) = delete;
  EmbeddingModel& operator=(const EmbeddingModel&) = delete;

  const EmbeddingConfig& config() const noexcept { return cfg_; }
  nn::ParamStore<T>& params() noexcept { return store_; }
  const nn::ParamStore<T>& params() const noexcept { return store_; }

  /// images: N x 1 x H x W in [0,1]; returns N x E unit rows. Each image is
  /// standardized first so global brightness and contrast carry no identity.
  nn::Var<T> forward(const nn::Binder<T>& bind, nn::Var<T> images) const {
    const T slope = static_cast<T>(cfg_.leaky_slope);
    nn::Var<T> x = nn::instance_norm(images);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = blocks_[i](bind, x);
      // the last block stays unnormalized: pooling a standardized map leaves
      // almost nothing but its value distribution's shape
      if (i + 1 < blocks_.size()) x = nn::instance_norm(x);
      x = nn::leaky_relu(x, slope);
    }
    return nn::l2_normalize_rows(proj_(bind, nn::global_avg_pool(x)), T(1e-12));
  }

  std::vector<T> embed(const GrayImage& img) const {
    nn::Tape<T> tape;
    const nn::Binder<T> bind{tape, false};
    const auto out = forward(bind, tape.constant(model::image_to_tensor<T>(img)));
    return out.value().vec();
  }

 private:
  EmbeddingConfig cfg_;
  nn::ParamStore<T> store_;
  std::array<nn::Conv2d<T>, 4> blocks_;
  nn::Linear<T> proj_;
};

/// Per-class weight vectors for the additive angular margin objective.
template <class T>
class ClassHead {
 public:
  ClassHead(std::size_t num_classes, std::size_t embedding_dim, std::uint64_t init_seed) {
    if (num_classes < 2) throw std::invalid_argument("ClassHead: need at least 2 classes");
    SplitMix64 rng(init_seed);
    weight_ = &store_.add("head.weight", nn::scaled_uniform<T>({num_classes, embedding_dim}, embedding_dim, rng));
  }
  ClassHead(const ClassHead&) = delete;
  ClassHead& operator=(const ClassHead&) = delete;

  std::size_t num_classes() const { return weight_->value.dim(0); }
  nn::Parameter<T>& weight() noexcept { return *weight_; }
  nn::ParamStore<T>& params() noexcept { return store_; }
  const nn::ParamStore<T>& params() const noexcept { return store_; }

 private:
  nn::ParamStore<T> store_;
  nn::Parameter<T>* weight_ = nullptr;
};

}  // namespace rpg::recog
