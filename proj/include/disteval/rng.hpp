#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace disteval {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seeded random stream: a 64-bit Mersenne Twister whose seed is derived
/// from (master seed, stream index) through SplitMix64. Uniform variates are
/// built from the raw 64-bit output so replay is bit-exact across standard
/// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t master_seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Index drawn from a probability vector by inversion.
  int categorical(std::span<const double> probs);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace disteval
