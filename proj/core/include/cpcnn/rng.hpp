#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cpcnn {

/// Seed for all randomized operations. Identical seeds give bit-identical
/// results on every platform.
struct Seed {
  std::uint64_t value = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent child seed for stream `stream` of `parent`.
///
/// Streams of a model seed:
///   graph sampling      = 0
///   block labelings     = 100 + block index
///   weight init         = 200
/// Streams of a data seed:
///   shuffle and flips   = 300 + epoch
///   synthetic sets (CLI) = 900 train, 901 eval
/// The CP generator then splits the graph seed once more: 1 core-core,
/// 2 core-periphery, 3 periphery-periphery pairs.
inline Seed split(Seed parent, std::uint64_t stream) {
  return Seed{splitmix64(parent.value ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))};
}

/// 64-bit Mersenne Twister (whose output sequence is fixed by the C++
/// standard) with portable uniform and normal conversions. The standard
/// distributions are implementation-defined, so none are used here.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(splitmix64(seed.value)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by rejection, unbiased.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cpcnn
