#pragma once

#include <cstdint>
#include <random>

namespace smm {

/// Seeded pseudo-random stream. Every stream is keyed by (seed, stream id) through
/// std::seed_seq over a 64-bit Mersenne Twister, so replicate r of an experiment
/// uses seed = base_seed + r and derives independent sub-streams (training data,
/// validation data, evaluation sample, model init) from distinct stream ids.
/// Output is reproducible for a fixed standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5eedu};
    engine_.seed(seq);
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform integer in [0, bound).
  std::uint64_t index(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; maps (seed, stream) to a well-separated child seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Named sub-stream ids used across the library.
namespace streams {
inline constexpr std::uint64_t train = 0;
inline constexpr std::uint64_t validation = 1;
inline constexpr std::uint64_t evaluation = 2;
inline constexpr std::uint64_t model_init = 3;
inline constexpr std::uint64_t corruption = 4;
inline constexpr std::uint64_t attack = 5;
inline constexpr std::uint64_t monte_carlo = 6;
inline constexpr std::uint64_t scenario = 7;
}  // namespace streams

}  // namespace smm
