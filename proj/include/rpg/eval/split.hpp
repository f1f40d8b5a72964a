#pragma once

#include <algorithm>
#include <stdexcept>
#include <cstdint>
#include <string>
#include <vector>

#include "rpg/core/errors.hpp"
#include "rpg/core/rng.hpp"

namespace rpg::eval {

struct SplitRatio {
  std::size_t train = 1;
  std::size_t test = 1;
  std::string tag() const {
    const std::string t = std::to_string(train) + ":" + std::to_string(test);
    return (t == "1:1" || t == "1:3") ? t : "custom " + t;
  }
};

inline SplitRatio parse_ratio(const std::string& s) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("no colon");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != colon && (s[i] < '0' || s[i] > '9')) throw std::invalid_argument("not a digit");
    std::size_t u1 = 0, u2 = 0;
    const auto a = std::stoul(s.substr(0, colon), &u1);
    const auto b = std::stoul(s.substr(colon + 1), &u2);
    if (u1 != colon || u2 != s.size() - colon - 1 || a == 0 || b == 0) throw std::invalid_argument("bad");
    return {a, b};
  } catch (const std::exception&) {
    throw ConfigError("bad split ratio '" + s + "' (expected TRAIN:TEST with positive integers)");
  }
}

struct SplitPlan {
  std::vector<std::uint64_t> train;
  std::vector<std::uint64_t> test;
  std::string tag;
};

/// Seeded shuffle, then with k = n / (train + test) whole ratio units, the
/// last test*k shuffled identities form the test set and the rest train.
inline SplitPlan make_split(std::vector<std::uint64_t> identities, const SplitRatio& ratio, std::uint64_t seed) {
  if (ratio.train == 0 || ratio.test == 0) throw ConfigError("split ratio parts must be positive");
  {
    auto sorted = identities;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("make_split: duplicate identity");
  }
  SplitMix64 rng(derive_seed(seed, seed_domain::split, 0));
  for (std::size_t i = identities.size(); i > 1; --i)
    std::swap(identities[i - 1], identities[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  const std::size_t k = identities.size() / (ratio.train + ratio.test);
  const std::size_t n_test = ratio.test * k;
  SplitPlan plan;
  plan.tag = ratio.tag();
  plan.train.assign(identities.begin(), identities.end() - static_cast<std::ptrdiff_t>(n_test));
  plan.test.assign(identities.end() - static_cast<std::ptrdiff_t>(n_test), identities.end());
  return plan;
}

}  // namespace rpg::eval
