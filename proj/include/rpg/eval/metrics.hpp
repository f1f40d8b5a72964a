#pragma once

// Open-set verification metrics over genuine / impostor similarity scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rpg/core/errors.hpp"
#include "rpg/core/rng.hpp"

namespace rpg::eval {

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
  friend bool operator==(const ScoreSet&, const ScoreSet&) = default;
};

inline void require_nonempty(const ScoreSet& s) {
  if (s.genuine.empty()) throw MetricError("no genuine scores");
  if (s.impostor.empty()) throw MetricError("no impostor scores");
}

namespace detail {
inline std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}
}  // namespace detail

/// The threshold is the smallest impostor value v with
/// #{impostor > v} / |impostor| <= far; acceptance is score >= threshold.
inline double threshold_at_far(std::span<const double> sorted_impostor, double far) {
  const std::size_t n = sorted_impostor.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = sorted_impostor[i];
    const auto above = static_cast<std::size_t>(
        sorted_impostor.end() - std::upper_bound(sorted_impostor.begin(), sorted_impostor.end(), v));
    if (static_cast<double>(above) / static_cast<double>(n) <= far) return v;
  }
  return sorted_impostor.back();  // unreachable: the maximum always qualifies
}

inline std::vector<double> tar_at_far(const ScoreSet& s, std::span<const double> far_levels) {
  require_nonempty(s);
  const auto imp = detail::sorted(s.impostor);
  const auto gen = detail::sorted(s.genuine);
  std::vector<double> out;
  out.reserve(far_levels.size());
  for (const double far : far_levels) {
    if (!(far > 0.0 && far <= 1.0)) throw MetricError("FAR level must lie in (0, 1]");
    const double t = threshold_at_far(imp, far);
    const auto accepted = static_cast<std::size_t>(gen.end() - std::lower_bound(gen.begin(), gen.end(), t));
    out.push_back(static_cast<double>(accepted) / static_cast<double>(gen.size()));
  }
  return out;
}

inline double tar_at_far(const ScoreSet& s, double far) { return tar_at_far(s, std::span<const double>(&far, 1))[0]; }

/// Equal error rate. Thresholds run over every distinct score plus +inf;
/// FAR(t) = #{imp >= t}/n, FRR(t) = #{gen < t}/n, and the crossing is
/// linearly interpolated between the two bracketing thresholds.
inline double eer(const ScoreSet& s) {
  require_nonempty(s);
  const auto imp = detail::sorted(s.impostor);
  const auto gen = detail::sorted(s.genuine);
  std::vector<double> thresholds(imp);
  thresholds.insert(thresholds.end(), gen.begin(), gen.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  const auto rates = [&](double t) {
    const double far = static_cast<double>(imp.end() - std::lower_bound(imp.begin(), imp.end(), t)) /
                       static_cast<double>(imp.size());
    const double frr = static_cast<double>(std::lower_bound(gen.begin(), gen.end(), t) - gen.begin()) /
                       static_cast<double>(gen.size());
    return std::pair{far, frr};
  };

  auto [far_prev, frr_prev] = rates(thresholds[0]);
  if (far_prev - frr_prev <= 0.0) return far_prev;
  for (std::size_t k = 1; k < thresholds.size(); ++k) {
    const auto [far, frr] = rates(thresholds[k]);
    const double d = far - frr;
    if (d == 0.0) return far;
    if (d < 0.0) {
      const double d_prev = far_prev - frr_prev;
      const double alpha = d_prev / (d_prev - d);
      return far_prev + alpha * (far - far_prev);
    }
    far_prev = far;
    frr_prev = frr;
  }
  return far_prev;  // unreachable: FRR reaches 1 at +inf
}

/// 50 FAR levels log-uniform over [1e-6, 1].
inline std::vector<double> curve_far_levels() {
  std::vector<double> far(50);
  for (std::size_t i = 0; i < far.size(); ++i) far[i] = std::pow(10.0, -6.0 + 6.0 * static_cast<double>(i) / 49.0);
  far.back() = 1.0;
  return far;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string curve_csv(const ScoreSet& s) {
  const auto far = curve_far_levels();
  const auto tar = tar_at_far(s, far);
  std::string out = "far,tar\n";
  for (std::size_t i = 0; i < far.size(); ++i) out += format_double(far[i]) + "," + format_double(tar[i]) + "\n";
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline void export_curve(const ScoreSet& s, const std::filesystem::path& path) { write_text(path, curve_csv(s)); }

/// Score dump: "label,score" header, then one row per score, genuine first.
inline std::string score_dump(const ScoreSet& s) {
  std::string out = "label,score\n";
  for (double v : s.genuine) out += "genuine," + format_double(v) + "\n";
  for (double v : s.impostor) out += "impostor," + format_double(v) + "\n";
  return out;
}

inline ScoreSet parse_score_dump(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  ScoreSet s;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line == "label,score")) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw MetricError("score dump line " + std::to_string(lineno) + ": missing comma");
    const std::string label = line.substr(0, comma);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw MetricError("score dump line " + std::to_string(lineno) + ": bad score");
    }
    if (label == "genuine") s.genuine.push_back(v);
    else if (label == "impostor") s.impostor.push_back(v);
    else throw MetricError("score dump line " + std::to_string(lineno) + ": unknown label '" + label + "'");
  }
  return s;
}

inline ScoreSet read_score_dump(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MetricError("cannot read score dump " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_score_dump(ss.str());
}

struct PairingPolicy {
  std::size_t impostor_cap = 1'000'000;
  std::uint64_t seed = 0;
};

inline double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw MetricError("embedding length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-12);
}

/// Genuine: every unordered intra-identity pair. Impostor: every unordered
/// inter-identity pair, or a seeded uniform subsample of `impostor_cap` of them.
inline ScoreSet score_pairs(std::span<const std::vector<float>> embeddings, std::span<const std::size_t> identity,
                            const PairingPolicy& policy = {}) {
  if (embeddings.size() != identity.size()) throw MetricError("embedding/identity count mismatch");
  const std::size_t n = embeddings.size();
  std::size_t impostor_total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) impostor_total += identity[i] != identity[j];

  ScoreSet s;
  std::size_t need = std::min(impostor_total, policy.impostor_cap);
  std::size_t remaining = impostor_total;
  SplitMix64 rng(derive_seed(policy.seed, seed_domain::split, 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (identity[i] == identity[j]) {
        s.genuine.push_back(cosine(embeddings[i], embeddings[j]));
        continue;
      }
      // selection sampling keeps each pair with probability need/remaining
      const bool take = need == remaining || (need > 0 && rng.uniform() * static_cast<double>(remaining) < need);
      --remaining;
      if (take) {
        --need;
        s.impostor.push_back(cosine(embeddings[i], embeddings[j]));
      }
    }
  }
  return s;
}

}  // namespace rpg::eval
