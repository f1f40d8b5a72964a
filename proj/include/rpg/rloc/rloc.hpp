#pragma once

// Robust line orientation codes (RLOC) and the identity-independence filter.
//
// Each pixel is scored against D line templates (mean of the inverted image
// along a digital line of length L at angle k*pi/D, a finite-Radon style
// projection). A grid cell takes, per orientation, the strongest response of
// any pixel inside it and stores the argmax orientation. Cells whose best
// response does not clear mean(darkness) + std(darkness) are marked invalid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "rpg/core/image.hpp"
#include "rpg/crease/bezier.hpp"
#include "rpg/crease/raster.hpp"

namespace rpg::rloc {

struct OrientationCode {
  std::size_t width = 0;
  std::size_t height = 0;
  int num_orientations = 6;
  std::vector<std::uint8_t> codes;
  std::vector<std::uint8_t> valid;  // 0/1 per cell

  bool any_valid() const noexcept {
    return std::any_of(valid.begin(), valid.end(), [](auto v) { return v != 0; });
  }
  friend bool operator==(const OrientationCode&, const OrientationCode&) = default;
};

struct RlocParams {
  int num_orientations = 6;
  int line_len = 9;
  int cell_stride = 4;
  int max_shift = 2;
  friend bool operator==(const RlocParams&, const RlocParams&) = default;
};

inline OrientationCode encode_rloc(const GrayImage& img, int num_orientations, int line_len, int cell_stride) {
  if (num_orientations < 2 || num_orientations > 255)
    throw std::invalid_argument("encode_rloc: need 2 <= D <= 255 orientations");
  if (line_len < 3 || line_len % 2 == 0) throw std::invalid_argument("encode_rloc: line_len must be odd and >= 3");
  if (cell_stride < 1) throw std::invalid_argument("encode_rloc: cell_stride must be >= 1");
  if (img.width() < static_cast<std::size_t>(line_len) || img.height() < static_cast<std::size_t>(line_len))
    throw std::invalid_argument("encode_rloc: image smaller than line template");

  const auto w = static_cast<long>(img.width());
  const auto h = static_cast<long>(img.height());
  std::vector<double> dark(img.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    dark[i] = 1.0 - img.pixels()[i];
    mean += dark[i];
  }
  mean /= static_cast<double>(dark.size());
  double var = 0.0;
  for (double d : dark) var += (d - mean) * (d - mean);
  const double evidence = mean + std::sqrt(var / static_cast<double>(dark.size()));

  // Digital line offsets per orientation; angle 0 is horizontal, y grows downward.
  const int half = line_len / 2;
  std::vector<std::vector<std::pair<long, long>>> lines(static_cast<std::size_t>(num_orientations));
  for (int k = 0; k < num_orientations; ++k) {
    const double theta = k * std::numbers::pi / num_orientations;
    for (int t = -half; t <= half; ++t) {
      const long dx = std::lround(t * std::cos(theta));
      const long dy = std::lround(-t * std::sin(theta));
      lines[k].emplace_back(dx, dy);
    }
  }

  OrientationCode code;
  code.num_orientations = num_orientations;
  code.width = img.width() / static_cast<std::size_t>(cell_stride);
  code.height = img.height() / static_cast<std::size_t>(cell_stride);
  code.codes.assign(code.width * code.height, 0);
  code.valid.assign(code.width * code.height, 0);

  std::vector<double> best(static_cast<std::size_t>(num_orientations));
  for (std::size_t cy = 0; cy < code.height; ++cy) {
    for (std::size_t cx = 0; cx < code.width; ++cx) {
      std::fill(best.begin(), best.end(), 0.0);
      for (long y = long(cy) * cell_stride; y < long(cy + 1) * cell_stride; ++y) {
        for (long x = long(cx) * cell_stride; x < long(cx + 1) * cell_stride; ++x) {
          for (int k = 0; k < num_orientations; ++k) {
            double s = 0.0;
            int n = 0;
            for (auto [dx, dy] : lines[k]) {
              const long xx = x + dx;
              const long yy = y + dy;
              if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
              s += dark[static_cast<std::size_t>(yy * w + xx)];
              ++n;
            }
            best[k] = std::max(best[k], s / n);
          }
        }
      }
      const auto arg = static_cast<std::size_t>(std::max_element(best.begin(), best.end()) - best.begin());
      const std::size_t cell = cy * code.width + cx;
      code.codes[cell] = static_cast<std::uint8_t>(arg);
      code.valid[cell] = best[arg] > evidence ? 1 : 0;
    }
  }
  return code;
}

inline OrientationCode encode_rloc(const GrayImage& img, const RlocParams& p) {
  return encode_rloc(img, p.num_orientations, p.line_len, p.cell_stride);
}

/// Angular agreement of two orientation indices, 1 when equal, 0 when orthogonal.
inline double angular_agreement(int k1, int k2, int num_orientations) noexcept {
  const int diff = std::abs(k1 - k2);
  const int circ = std::min(diff, num_orientations - diff);
  return 1.0 - circ / (num_orientations / 2.0);
}

/// Best mean agreement over translations |dx|,|dy| <= max_shift of b relative to a.
inline double rloc_similarity(const OrientationCode& a, const OrientationCode& b, int max_shift) {
  if (a.width != b.width || a.height != b.height || a.num_orientations != b.num_orientations)
    throw std::invalid_argument("rloc_similarity: code dimensions differ");
  if (max_shift < 0) throw std::invalid_argument("rloc_similarity: max_shift must be >= 0");
  const auto w = static_cast<long>(a.width);
  const auto h = static_cast<long>(a.height);
  double best = 0.0;
  for (long dy = -max_shift; dy <= max_shift; ++dy) {
    for (long dx = -max_shift; dx <= max_shift; ++dx) {
      double sum = 0.0;
      long n = 0;
      for (long y = std::max(0L, -dy); y < std::min(h, h - dy); ++y) {
        for (long x = std::max(0L, -dx); x < std::min(w, w - dx); ++x) {
          const auto ia = static_cast<std::size_t>(y * w + x);
          const auto ib = static_cast<std::size_t>((y + dy) * w + (x + dx));
          if (!a.valid[ia] || !b.valid[ib]) continue;
          sum += angular_agreement(a.codes[ia], b.codes[ib], a.num_orientations);
          ++n;
        }
      }
      if (n > 0) best = std::max(best, sum / static_cast<double>(n));
    }
  }
  return best;
}

struct FilterConfig {
  double threshold = 0.9;
  RlocParams rloc;
  std::size_t raster_size = 64;
  bool principal_only = false;
};

struct FilterResult {
  std::vector<std::size_t> accepted;  // positions in the input sequence
  std::vector<std::size_t> rejected;
  double acceptance_rate() const noexcept {
    const auto total = accepted.size() + rejected.size();
    return total == 0 ? 0.0 : static_cast<double>(accepted.size()) / static_cast<double>(total);
  }
};

inline OrientationCode encode_spec(const crease::CreaseSpec& spec, const FilterConfig& cfg) {
  const auto raster = crease::rasterize(cfg.principal_only ? crease::principal_only(spec) : spec,
                                        cfg.raster_size, cfg.raster_size);
  return encode_rloc(raster, cfg.rloc);
}

/// Greedy first-come filter over precomputed codes: a candidate is kept iff
/// its similarity to every kept code is strictly below the threshold.
inline FilterResult filter_codes(std::span<const OrientationCode> codes, double threshold, int max_shift) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("filter: threshold must be in (0,1]");
  FilterResult res;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    bool keep = true;
    for (std::size_t j : res.accepted) {
      if (rloc_similarity(codes[i], codes[j], max_shift) >= threshold) {
        keep = false;
        break;
      }
    }
    (keep ? res.accepted : res.rejected).push_back(i);
  }
  return res;
}

inline FilterResult filter_independent(std::span<const crease::CreaseSpec> specs, const FilterConfig& cfg) {
  std::vector<OrientationCode> codes;
  codes.reserve(specs.size());
  for (const auto& s : specs) codes.push_back(encode_spec(s, cfg));
  return filter_codes(codes, cfg.threshold, cfg.rloc.max_shift);
}

}  // namespace rpg::rloc
