#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string_view>
#include <vector>

#include "lipadapt/core/hash.hpp"

namespace lipadapt {

// RNG contract shared by every stochastic component (augmentation, shuffling,
// initialization, bootstrap). It is spelled out so that independent
// implementations can reproduce streams exactly:
//
//   state_0 = seed
//   next():  state += 0x9E3779B97F4A7C15; z = state;
//            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//            z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//            return z ^ (z >> 31)                       (SplitMix64)
//   below(n): floor(next() * n / 2^64)                  (128-bit multiply-high)
//   uniform01(): (next() >> 11) * 2^-53
//
// Substreams are keyed with derive_seed(), which folds each key through one
// SplitMix64 finalizer round.
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = splitmix64_mix(seed + 0x9E3779B97F4A7C15ULL);
  for (std::uint64_t k : keys) s = splitmix64_mix(s ^ (k + 0x9E3779B97F4A7C15ULL));
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key,
                                 std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t s = derive_seed(seed, {fnv1a(key)});
  for (std::uint64_t k : keys) s = splitmix64_mix(s ^ (k + 0x9E3779B97F4A7C15ULL));
  return s;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix64_mix(state_);
  }

  // Uniform in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Uniform in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller; consumes two draws per call.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <class Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace lipadapt
