// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random streams. Every stochastic routine takes an explicit
// stream; independent sub-streams are derived from (seed, tags) so results are
// reproducible regardless of evaluation order or thread count.
#pragma once

#include <cstdint>
#include <random>

namespace lidal {

/// SplitMix64 step; used to whiten seed material when deriving sub-streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D4ECB7BF6D1A91ull;
  return z ^ (z >> 31);
}

/// A seeded random stream (Mersenne Twister 64) with the distributions used
/// throughout the simulator.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Derive an independent sub-stream from this seed and up to three tags
  /// (e.g. iteration index, unit index, frame index). Derivation is pure:
  /// the parent stream state is not consumed.
  static RandomStream derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                             std::uint64_t c = 0) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    s ^= a * 0x9E3779B97F4A7C15ull;
    h ^= splitmix64(s);
    s ^= b * 0xC2B2AE3D27D4EB4Full;
    h ^= splitmix64(s);
    s ^= c * 0x165667B19E3779F9ull;
    h ^= splitmix64(s);
    return RandomStream(h);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  double gaussian(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
  /// Exponential with the given rate [1/s].
  double exponential(double rate) {
    return std::exponential_distribution<double>(rate)(engine_);
  }
  int poisson(double mean) { return std::poisson_distribution<int>(mean)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lidal
