#pragma once

#include <cstdint>

namespace dualfusion {

// Counter-based generator. The k-th 64-bit output is the SplitMix64 finalizer
// applied to seed + (k + 1) * 0x9E3779B97F4A7C15, so the stream depends only
// on (seed, counter) and is identical on every platform.
//
// Gaussian draws use the Box-Muller transform on two consecutive uniforms
// u1 = 1 - uniform() in (0, 1], u2 = uniform() in [0, 1):
//   r = sqrt(-2 ln u1), first = r cos(2 pi u2), second = r sin(2 pi u2).
// The second value is cached and returned by the next normal() call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

  // Independent generator for a named sub-stream (e.g. per grid cell).
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace dualfusion
