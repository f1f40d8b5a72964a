#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "rpg/core/image.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/nn/tensor.hpp"

namespace rpg::model {

/// Stacks equally sized images into an N x 1 x H x W tensor, values kept in [0,1].
template <class T>
nn::Tensor<T> images_to_tensor(std::span<const GrayImage> images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const std::size_t w = images[0].width(), h = images[0].height();
  nn::Tensor<T> out({images.size(), 1, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n].width() != w || images[n].height() != h)
      throw std::invalid_argument("images_to_tensor: images differ in size");
    for (std::size_t i = 0; i < w * h; ++i) out[n * w * h + i] = static_cast<T>(images[n].pixels()[i]);
  }
  return out;
}

template <class T>
nn::Tensor<T> image_to_tensor(const GrayImage& img) {
  return images_to_tensor<T>(std::span<const GrayImage>(&img, 1));
}

/// Sample `index` of an N x 1 x H x W tensor back to an image, clamped to [0,1].
template <class T>
GrayImage tensor_to_image(const nn::Tensor<T>& t, std::size_t index = 0) {
  if (t.rank() != 4 || t.dim(1) != 1) throw std::invalid_argument("tensor_to_image: expected N x 1 x H x W");
  const std::size_t h = t.dim(2), w = t.dim(3);
  std::vector<float> data(w * h);
  for (std::size_t i = 0; i < w * h; ++i) data[i] = static_cast<float>(t[index * w * h + i]);
  GrayImage img(w, h, std::move(data));
  img.clamp01();
  return img;
}

template <class T>
nn::Tensor<T> standard_normal(nn::Shape shape, std::uint64_t seed) {
  nn::Tensor<T> t(std::move(shape));
  SplitMix64 rng(seed);
  for (auto& v : t.span()) v = static_cast<T>(rng.normal());
  return t;
}

}  // namespace rpg::model
