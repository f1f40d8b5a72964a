#pragma once

// Parametric palm-crease identities built from two-level quadratic Bezier chains.
//
// Level 1 samples a coarse (start, control, end) quadratic per line. Level 2
// takes the coarse curve at t = 0, 1/3, 2/3, 1 and joins consecutive key points
// with quadratic segments whose controls sit off the chord midpoint by a
// random fraction of the chord length.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rpg/core/errors.hpp"
#include "rpg/core/rng.hpp"

namespace rpg::crease {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) noexcept { return {s * p.x, s * p.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(Point2 a, Point2 b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

inline Point2 eval_quadratic_bezier(Point2 p0, Point2 c, Point2 p1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("eval_quadratic_bezier: t outside [0,1]");
  const double u = 1.0 - t;
  return {u * u * p0.x + 2.0 * t * u * c.x + t * t * p1.x,
          u * u * p0.y + 2.0 * t * u * c.y + t * t * p1.y};
}

struct QuadSegment {
  Point2 p0, c, p1;
  friend bool operator==(const QuadSegment&, const QuadSegment&) = default;
};

struct BezierChain {
  std::vector<QuadSegment> segments;
  double stroke_width = 1.0;  // pixels at raster resolution
  double intensity = 1.0;     // darkness in [0,1]
  friend bool operator==(const BezierChain&, const BezierChain&) = default;
};

struct PrincipalAnchors {
  Point2 start, control, end;
  friend bool operator==(const PrincipalAnchors&, const PrincipalAnchors&) = default;
};

struct CreaseSpec {
  std::uint64_t identity_seed = 0;
  std::vector<BezierChain> principal;  // heart, head, life
  std::vector<BezierChain> wrinkles;
  std::vector<PrincipalAnchors> layout;
  friend bool operator==(const CreaseSpec&, const CreaseSpec&) = default;
};

/// Axis-aligned region in normalized coordinates, origin top-left.
struct Box {
  double x0, x1, y0, y1;
  bool contains(Point2 p) const noexcept { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  friend bool operator==(const Box&, const Box&) = default;
};

struct PrincipalRegion {
  Box start, control, end;
  friend bool operator==(const PrincipalRegion&, const PrincipalRegion&) = default;
};

struct Range {
  double lo, hi;
  friend bool operator==(const Range&, const Range&) = default;
};

struct LayoutConfig {
  std::array<PrincipalRegion, 3> principal{{
      // heart
      {{0.05, 0.25, 0.15, 0.35}, {0.40, 0.60, 0.30, 0.45}, {0.75, 0.95, 0.25, 0.45}},
      // head
      {{0.05, 0.25, 0.35, 0.55}, {0.35, 0.55, 0.45, 0.65}, {0.60, 0.90, 0.50, 0.70}},
      // life
      {{0.15, 0.35, 0.20, 0.40}, {0.40, 0.60, 0.45, 0.65}, {0.25, 0.50, 0.80, 0.95}},
  }};
  double bend_fraction = 0.15;        // level-2 control offset, fraction of chord
  double wrinkle_bend = 0.25;         // level-1 control offset for wrinkles
  int wrinkle_min = 4;
  int wrinkle_max = 12;
  Range wrinkle_length{0.08, 0.30};   // total arc length, normalized units
  std::array<int, 2> principal_width{2, 3};
  std::array<int, 2> wrinkle_width{1, 2};
  Range principal_intensity{0.7, 1.0};
  Range wrinkle_intensity{0.3, 0.7};

  friend bool operator==(const LayoutConfig&, const LayoutConfig&) = default;
};

inline void validate(const LayoutConfig& cfg) {
  auto check_box = [](const Box& b, const char* what) {
    if (!(b.x0 >= 0.0 && b.x1 <= 1.0 && b.y0 >= 0.0 && b.y1 <= 1.0) || !(b.x1 > b.x0) ||
        !(b.y1 > b.y0))
      throw ConfigError(std::string("degenerate or out-of-range region box: ") + what);
  };
  for (const auto& r : cfg.principal) {
    check_box(r.start, "start");
    check_box(r.control, "control");
    check_box(r.end, "end");
  }
  if (cfg.wrinkle_min < 0 || cfg.wrinkle_max < cfg.wrinkle_min)
    throw ConfigError("wrinkle count range is empty");
  if (!(cfg.wrinkle_length.lo > 0.0) || cfg.wrinkle_length.hi < cfg.wrinkle_length.lo)
    throw ConfigError("wrinkle length range is empty");
  if (cfg.bend_fraction < 0.0 || cfg.wrinkle_bend < 0.0) throw ConfigError("negative bend fraction");
  for (int w : {cfg.principal_width[0], cfg.principal_width[1], cfg.wrinkle_width[0], cfg.wrinkle_width[1]})
    if (w < 1) throw ConfigError("stroke widths must be >= 1 pixel");
  for (const Range& r : {cfg.principal_intensity, cfg.wrinkle_intensity})
    if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) throw ConfigError("intensity range outside [0,1]");
}

/// Arc length of a chain by dense polyline sampling.
inline double arc_length(const BezierChain& chain, int samples_per_segment = 256) {
  double len = 0.0;
  for (const auto& s : chain.segments) {
    Point2 prev = s.p0;
    for (int i = 1; i <= samples_per_segment; ++i) {
      const Point2 p = eval_quadratic_bezier(s.p0, s.c, s.p1, double(i) / samples_per_segment);
      len += distance(prev, p);
      prev = p;
    }
  }
  return len;
}

namespace detail {

inline Point2 uniform_in(const Box& b, SplitMix64& rng) {
  const double x = rng.uniform(b.x0, b.x1);
  const double y = rng.uniform(b.y0, b.y1);
  return {x, y};
}

inline std::vector<QuadSegment> two_level(Point2 start, Point2 control, Point2 end, double bend,
                                          SplitMix64& rng) {
  std::array<Point2, 4> keys{};
  for (int i = 0; i < 4; ++i) keys[i] = eval_quadratic_bezier(start, control, end, i / 3.0);
  keys[0] = start;
  keys[3] = end;
  std::vector<QuadSegment> segs;
  segs.reserve(3);
  for (int i = 0; i < 3; ++i) {
    const Point2 a = keys[i];
    const Point2 b = keys[i + 1];
    const Point2 mid = 0.5 * (a + b);
    const Point2 normal{-(b.y - a.y), b.x - a.x};
    const double u = rng.uniform(-bend, bend);
    segs.push_back({a, mid + u * normal, b});
  }
  return segs;
}

inline int pick(const std::array<int, 2>& choices, SplitMix64& rng) {
  return static_cast<int>(rng.uniform_int(choices[0], choices[1]));
}

}  // namespace detail

inline CreaseSpec sample_crease_spec(std::uint64_t identity_seed, const LayoutConfig& cfg) {
  validate(cfg);
  SplitMix64 rng(identity_seed);
  CreaseSpec spec;
  spec.identity_seed = identity_seed;

  for (const auto& region : cfg.principal) {
    PrincipalAnchors a{detail::uniform_in(region.start, rng), detail::uniform_in(region.control, rng),
                       detail::uniform_in(region.end, rng)};
    BezierChain chain;
    chain.segments = detail::two_level(a.start, a.control, a.end, cfg.bend_fraction, rng);
    chain.stroke_width = detail::pick(cfg.principal_width, rng);
    chain.intensity = rng.uniform(cfg.principal_intensity.lo, cfg.principal_intensity.hi);
    spec.layout.push_back(a);
    spec.principal.push_back(std::move(chain));
  }

  const int k = static_cast<int>(rng.uniform_int(cfg.wrinkle_min, cfg.wrinkle_max));
  if (k == 0) return spec;

  // Stratify wrinkle starts: one start per grid cell, cells chosen without replacement.
  const int grid = static_cast<int>(std::ceil(std::sqrt(double(k))));
  std::vector<int> cells(static_cast<std::size_t>(grid * grid));
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = cells.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(cells[i], cells[j]);
  }
  const double cell = 1.0 / grid;
  for (int w = 0; w < k; ++w) {
    const int cx = cells[w] % grid;
    const int cy = cells[w] / grid;
    const Point2 start{rng.uniform(cx * cell, (cx + 1) * cell), rng.uniform(cy * cell, (cy + 1) * cell)};
    const double target = rng.uniform(cfg.wrinkle_length.lo, cfg.wrinkle_length.hi);

    Point2 end{};
    for (int attempt = 0; attempt < 8; ++attempt) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      end = start + target * Point2{std::cos(angle), std::sin(angle)};
      if (end.x >= 0.0 && end.x <= 1.0 && end.y >= 0.0 && end.y <= 1.0) break;
    }
    const Point2 mid = 0.5 * (start + end);
    const Point2 normal{-(end.y - start.y), end.x - start.x};
    const Point2 control = mid + rng.uniform(-cfg.wrinkle_bend, cfg.wrinkle_bend) * normal;

    BezierChain chain;
    chain.segments = detail::two_level(start, control, end, cfg.bend_fraction, rng);
    // Scale about the start so the total arc length equals the drawn target.
    const double scale = target / arc_length(chain);
    for (auto& s : chain.segments) {
      s.p0 = start + scale * (s.p0 - start);
      s.c = start + scale * (s.c - start);
      s.p1 = start + scale * (s.p1 - start);
    }
    for (std::size_t i = 1; i < chain.segments.size(); ++i) chain.segments[i].p0 = chain.segments[i - 1].p1;
    chain.stroke_width = detail::pick(cfg.wrinkle_width, rng);
    chain.intensity = rng.uniform(cfg.wrinkle_intensity.lo, cfg.wrinkle_intensity.hi);
    spec.wrinkles.push_back(std::move(chain));
  }
  return spec;
}

/// Displaces every anchor by at most `magnitude` (Chebyshev). Shared chain
/// endpoints move together so continuity is preserved.
inline CreaseSpec jitter_spec(const CreaseSpec& spec, double magnitude, std::uint64_t sample_seed) {
  if (!(magnitude >= 0.0)) throw std::invalid_argument("jitter_spec: magnitude must be >= 0");
  if (magnitude == 0.0) return spec;
  SplitMix64 rng(sample_seed);
  auto offset = [&] {
    const double dx = rng.uniform(-magnitude, magnitude);
    const double dy = rng.uniform(-magnitude, magnitude);
    return Point2{dx, dy};
  };
  auto jitter_chain = [&](BezierChain& chain) {
    if (chain.segments.empty()) return;
    Point2 shared = offset();
    for (auto& s : chain.segments) {
      s.p0 = s.p0 + shared;
      s.c = s.c + offset();
      shared = offset();
      s.p1 = s.p1 + shared;
    }
  };
  CreaseSpec out = spec;
  for (auto& c : out.principal) jitter_chain(c);
  for (auto& c : out.wrinkles) jitter_chain(c);
  return out;
}

inline CreaseSpec principal_only(CreaseSpec spec) {
  spec.wrinkles.clear();
  return spec;
}

/// Canonical little-endian byte image of a spec, used for identity comparisons.
inline std::vector<std::uint8_t> to_bytes(const CreaseSpec& spec) {
  std::vector<std::uint8_t> out;
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto put_f64 = [&](double d) { put_u64(std::bit_cast<std::uint64_t>(d)); };
  auto put_pt = [&](Point2 p) {
    put_f64(p.x);
    put_f64(p.y);
  };
  auto put_chain = [&](const BezierChain& c) {
    put_u64(c.segments.size());
    for (const auto& s : c.segments) {
      put_pt(s.p0);
      put_pt(s.c);
      put_pt(s.p1);
    }
    put_f64(c.stroke_width);
    put_f64(c.intensity);
  };
  put_u64(spec.identity_seed);
  put_u64(spec.principal.size());
  for (const auto& c : spec.principal) put_chain(c);
  put_u64(spec.wrinkles.size());
  for (const auto& c : spec.wrinkles) put_chain(c);
  put_u64(spec.layout.size());
  for (const auto& a : spec.layout) {
    put_pt(a.start);
    put_pt(a.control);
    put_pt(a.end);
  }
  return out;
}

}  // namespace rpg::crease
