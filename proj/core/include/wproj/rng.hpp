#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace wproj {

using Rng = std::mt19937_64;

/// Independent streams are keyed by purpose so that, e.g., projection noise at
/// step t never shares draws with the minibatch shuffle of the same epoch.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kProjection = 2,
  kBetaSample = 3,
  kShuffle = 4,
  kEvaluation = 5,
  kSweep = 6,
  kData = 7,
};

/// splitmix64-based combination of a seed with an ordered list of keys.
std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

/// A generator whose state depends only on (seed, purpose, a, b).
Rng make_stream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t a = 0,
                std::uint64_t b = 0);

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace wproj
