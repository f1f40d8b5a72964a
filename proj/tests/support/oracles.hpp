#pragma once

// Slow reference implementations used to cross-check the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rpg/eval/metrics.hpp"
#include "rpg/rloc/rloc.hpp"

namespace rpg::testing {

/// Every cell of a against every cell of b, keeping pairs whose offset is the shift under test.
inline double brute_force_similarity(const rloc::OrientationCode& a, const rloc::OrientationCode& b, int max_shift) {
  double best = 0.0;
  const int d = a.num_orientations;
  for (int sy = -max_shift; sy <= max_shift; ++sy)
    for (int sx = -max_shift; sx <= max_shift; ++sx) {
      double sum = 0.0;
      int n = 0;
      for (std::size_t i = 0; i < a.codes.size(); ++i)
        for (std::size_t j = 0; j < b.codes.size(); ++j) {
          const int ax = int(i % a.width), ay = int(i / a.width);
          const int bx = int(j % b.width), by = int(j / b.width);
          if (bx - ax != sx || by - ay != sy || !a.valid[i] || !b.valid[j]) continue;
          const int diff = std::abs(int(a.codes[i]) - int(b.codes[j]));
          sum += 1.0 - std::min(diff, d - diff) / (d / 2.0);
          ++n;
        }
      if (n) best = std::max(best, sum / n);
    }
  return best;
}

inline rloc::OrientationCode random_code(std::size_t w, std::size_t h, int d, double valid_p, SplitMix64& rng) {
  rloc::OrientationCode c;
  c.width = w;
  c.height = h;
  c.num_orientations = d;
  for (std::size_t i = 0; i < w * h; ++i) {
    c.codes.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, d - 1)));
    c.valid.push_back(rng.uniform() < valid_p ? 1 : 0);
  }
  return c;
}

inline std::size_t count_if_loop(const std::vector<double>& v, auto pred) {
  std::size_t n = 0;
  for (double x : v) n += pred(x) ? 1 : 0;
  return n;
}

/// Tries every impostor value as a threshold and keeps the smallest one whose
/// strict exceedance rate is within the budget.
inline double oracle_tar_at_far(const eval::ScoreSet& s, double far) {
  double best = std::numeric_limits<double>::infinity();
  for (double v : s.impostor) {
    const double rate = double(count_if_loop(s.impostor, [&](double x) { return x > v; })) / double(s.impostor.size());
    if (rate <= far && v < best) best = v;
  }
  return double(count_if_loop(s.genuine, [&](double x) { return x >= best; })) / double(s.genuine.size());
}

/// Walks every candidate threshold in ascending order and interpolates at the
/// first one where FAR drops to or below FRR.
inline double oracle_eer(const eval::ScoreSet& s) {
  std::vector<double> t;
  for (double x : s.genuine) t.push_back(x);
  for (double x : s.impostor) t.push_back(x);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  t.push_back(std::numeric_limits<double>::infinity());
  std::vector<double> far, frr;
  for (double th : t) {
    far.push_back(double(count_if_loop(s.impostor, [&](double x) { return x >= th; })) / double(s.impostor.size()));
    frr.push_back(double(count_if_loop(s.genuine, [&](double x) { return x < th; })) / double(s.genuine.size()));
  }
  if (far[0] <= frr[0]) return far[0];
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (far[k] == frr[k]) return far[k];
    if (far[k] < frr[k]) {
      const double d0 = far[k - 1] - frr[k - 1], d1 = far[k] - frr[k];
      return far[k - 1] + d0 / (d0 - d1) * (far[k] - far[k - 1]);
    }
  }
  return far.back();
}

/// Random score set with ties: scores drawn from a coarse grid.
inline eval::ScoreSet random_scores(SplitMix64& rng, std::size_t max_n = 100) {
  eval::ScoreSet s;
  const auto ng = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_n / 2)));
  const auto ni = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_n / 2)));
  const double grid = rng.uniform() < 0.5 ? 20.0 : 1e6;
  for (std::size_t i = 0; i < ng; ++i) s.genuine.push_back(std::round(rng.uniform(0.2, 1.0) * grid) / grid);
  for (std::size_t i = 0; i < ni; ++i) s.impostor.push_back(std::round(rng.uniform(0.0, 0.8) * grid) / grid);
  return s;
}

}  // namespace rpg::testing
