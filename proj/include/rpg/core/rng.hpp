#pragma once

// Seed derivation and the counter-based generator every stage draws from.
//
// All randomness in the library is derived from a single 64-bit master seed:
//
//   derive_seed(master, domain, index) = mix(mix(master ^ fnv1a64(domain)) ^ index)
//
// where mix is the splitmix64 finalizer (increment 0x9E3779B97F4A7C15, then
// multipliers 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB with shifts 30/27/31)
// and fnv1a64 uses offset basis 0xCBF29CE484222325 and prime 0x100000001B3.
// Real-valued draws never go through <random> distributions, whose output is
// implementation-defined; uniform() and normal() below are fully specified.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace rpg {

namespace seed_domain {
inline constexpr std::string_view crease = "crease";
inline constexpr std::string_view jitter = "jitter";
inline constexpr std::string_view latent = "latent";
inline constexpr std::string_view noise = "noise";
inline constexpr std::string_view split = "split";
inline constexpr std::string_view shuffle = "shuffle";
inline constexpr std::string_view init = "init";
}  // namespace seed_domain

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix_mix(std::uint64_t x) noexcept {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view domain,
                                    std::uint64_t index) noexcept {
  return splitmix_mix(splitmix_mix(master ^ fnv1a64(domain)) ^ index);
}

/// splitmix64 stream. Satisfies UniformRandomBitGenerator so it can drive
/// std::shuffle and friends, but use the member draws for real values.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive). Multiply-shift reduction.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<unsigned __int128>(static_cast<std::uint64_t>(hi - lo) + 1U);
    const auto r = static_cast<std::uint64_t>((span * (*this)()) >> 64);
    return lo + static_cast<std::int64_t>(r);
  }

  /// Standard normal via Box-Muller; one draw per call, the sine branch is dropped.
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace rpg
