#pragma once

#include <cstdint>
#include <random>

namespace genie::nn {

// Draws built directly on mt19937_64 output so that streams are identical
// across standard library implementations (std distributions are not).

// Uniform in [0, 1) with 53 random bits.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_uniform(rng);
}

// Uniform integer in [0, n), n > 0, unbiased (rejection sampling).
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace genie::nn
