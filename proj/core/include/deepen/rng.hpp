#pragma once

#include <cstdint>
#include <random>

namespace deepen {

// Deterministic random source. All sampling goes through explicit methods
// here instead of std <random> distributions, whose output is
// implementation-defined; streams produced by this class are identical
// across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of entropy.
  double uniform();

  // Uniform integer in [0, n). Requires n > 0.
  std::int64_t uniform_int(std::int64_t n);

  // Standard normal via Box-Muller (cached second sample).
  double normal();

  // Derives an independent generator for a named substream. Forking with
  // the same stream id always yields the same child sequence.
  Rng fork(std::uint64_t stream) const;

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer; used for seed derivation and config hashing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace deepen
