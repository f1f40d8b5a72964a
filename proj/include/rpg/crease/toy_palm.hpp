#pragma once

// Stand-in for real palmprint ROIs when no real data is supplied: a crease
// identity rendered with blur, skin-tone background, an illumination ramp,
// low-frequency texture and sensor noise. The appearance statistics differ
// from the clean crease rasters, which is what the translation model has to bridge.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "rpg/core/image.hpp"
#include "rpg/core/rng.hpp"
#include "rpg/crease/bezier.hpp"
#include "rpg/crease/raster.hpp"

namespace rpg::crease {

struct ToyPalmStyle {
  double jitter = 0.012;
  Range background{0.55, 0.80};
  Range line_contrast{0.45, 0.75};
  double illumination = 0.12;
  double texture = 0.03;
  double sensor_noise = 0.02;
};

inline GrayImage box_blur3(const GrayImage& in) {
  GrayImage out(in.width(), in.height());
  const auto w = static_cast<long>(in.width());
  const auto h = static_cast<long>(in.height());
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      float s = 0.0f;
      int n = 0;
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          const long xx = x + dx;
          const long yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          s += in.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy));
          ++n;
        }
      }
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = s / static_cast<float>(n);
    }
  }
  return out;
}

/// Renders sample `sample_seed` of the identity described by `identity`.
inline GrayImage render_toy_palm(const CreaseSpec& identity, std::uint64_t sample_seed, std::size_t size,
                                 const ToyPalmStyle& style = {}) {
  SplitMix64 rng(sample_seed);
  const CreaseSpec spec = jitter_spec(identity, style.jitter, rng());
  const GrayImage creases = box_blur3(rasterize(spec, size, size));

  const double base = rng.uniform(style.background.lo, style.background.hi);
  const double contrast = rng.uniform(style.line_contrast.lo, style.line_contrast.hi);
  const double ramp_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ramp = rng.uniform(0.0, style.illumination);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& wv : waves)
    wv = {rng.uniform(1.0, 4.0), rng.uniform(1.0, 4.0), rng.uniform(0.0, 2.0 * std::numbers::pi),
          rng.uniform(0.0, style.texture)};

  GrayImage out(size, size);
  const double inv = 1.0 / static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (x + 0.5) * inv - 0.5;
      const double v = (y + 0.5) * inv - 0.5;
      double bg = base + ramp * (u * std::cos(ramp_angle) + v * std::sin(ramp_angle));
      for (const auto& wv : waves)
        bg += wv.amp * std::sin(2.0 * std::numbers::pi * (wv.fx * u + wv.fy * v) + wv.phase);
      const double line = 1.0 - creases.at(x, y);
      double val = bg * (1.0 - contrast * line) + style.sensor_noise * rng.normal();
      out.at(x, y) = static_cast<float>(std::clamp(val, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace rpg::crease
