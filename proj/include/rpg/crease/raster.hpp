#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rpg/core/image.hpp"
#include "rpg/crease/bezier.hpp"

namespace rpg::crease {

namespace detail {

inline double point_segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax;
  const double vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0);
  return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

// Max pen coverage of one chain into `coverage`. Linear ramp over one pixel
// around the pen radius.
inline void stroke_chain(const BezierChain& chain, std::size_t w, std::size_t h,
                         std::vector<double>& coverage) {
  const double radius = 0.5 * chain.stroke_width;
  const double reach = radius + 0.5;
  for (const auto& s : chain.segments) {
    const Point2 a{s.p0.x * w, s.p0.y * h};
    const Point2 c{s.c.x * w, s.c.y * h};
    const Point2 b{s.p1.x * w, s.p1.y * h};
    // The control polygon bounds the arc length; half-pixel steps keep
    // consecutive samples well under one pixel apart.
    const double bound = distance(a, c) + distance(c, b);
    const int steps = std::max(1, static_cast<int>(std::ceil(bound / 0.5)));
    Point2 prev = a;
    for (int i = 1; i <= steps; ++i) {
      const Point2 cur = eval_quadratic_bezier(a, c, b, double(i) / steps);
      const double x_lo = std::floor(std::min(prev.x, cur.x) - reach);
      const double x_hi = std::ceil(std::max(prev.x, cur.x) + reach);
      const double y_lo = std::floor(std::min(prev.y, cur.y) - reach);
      const double y_hi = std::ceil(std::max(prev.y, cur.y) + reach);
      const auto x0 = static_cast<long>(std::max(0.0, x_lo));
      const auto x1 = static_cast<long>(std::min(double(w) - 1.0, x_hi));
      const auto y0 = static_cast<long>(std::max(0.0, y_lo));
      const auto y1 = static_cast<long>(std::min(double(h) - 1.0, y_hi));
      for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
          const double d = point_segment_distance(x + 0.5, y + 0.5, prev.x, prev.y, cur.x, cur.y);
          const double cov = std::clamp(reach - d, 0.0, 1.0);
          double& slot = coverage[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
          slot = std::max(slot, cov);
        }
      }
      prev = cur;
    }
  }
}

}  // namespace detail

/// Light background (1.0) with crease strokes darkened toward 1 - intensity.
/// Compositing is a per-pixel minimum, so the result does not depend on draw order.
inline GrayImage rasterize(const CreaseSpec& spec, std::size_t width, std::size_t height) {
  if (width < 16 || height < 16) throw std::invalid_argument("rasterize: canvas must be at least 16x16");
  GrayImage img(width, height, 1.0f);
  std::vector<double> coverage(width * height);
  auto draw = [&](const BezierChain& chain) {
    if (chain.segments.empty()) return;
    std::fill(coverage.begin(), coverage.end(), 0.0);
    detail::stroke_chain(chain, width, height, coverage);
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
      const auto v = static_cast<float>(1.0 - chain.intensity * coverage[i]);
      px[i] = std::min(px[i], v);
    }
  };
  for (const auto& c : spec.principal) draw(c);
  for (const auto& c : spec.wrinkles) draw(c);
  img.clamp01();
  return img;
}

}  // namespace rpg::crease
