#pragma once

#include <cstdint>

namespace privmark {

/// Small counter-friendly PRNG (splitmix64). One instance per Monte Carlo
/// trial keeps results independent of thread scheduling.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

/// Derives the stream for one trial from (seed, trial index).
inline SplitMix64 trial_rng(std::uint64_t seed, std::uint64_t trial) {
  SplitMix64 g(seed ^ (0xD1B54A32D192ED03ull * (trial + 1)));
  g.next();
  return g;
}

}  // namespace privmark
