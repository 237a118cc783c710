#pragma once

#include <cstdint>

namespace retgan {

/// Counter-based deterministic generator (splitmix64 of key + counter).
/// The state is exactly (key, counter), so it serializes into two words and
/// any draw sequence can be resumed bit-exactly. Every stochastic operation
/// in the library takes one of these explicitly; there is no global RNG.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), ctr_(counter) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller. Two uniforms per draw, nothing cached,
  /// so the (key, counter) pair remains the whole state.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Independent substream for (domain, index); forking does not advance
  /// this generator.
  Rng fork(std::uint64_t domain, std::uint64_t index = 0) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return ctr_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t ctr_ = 0;
};

}  // namespace retgan
