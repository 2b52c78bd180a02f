#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace chsnet {

// Mixes (seed, stream, index) into an independent 64-bit seed with the
// SplitMix64 finalizer. Used to give every image/epoch/purpose its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

// Reproducible random source: the standard mt19937_64 engine (whose output
// sequence is fixed by the C++ standard) with hand-written transforms. The
// std:: distributions are implementation-defined, so they are not used.
//
//   uniform()  : top 53 bits of one draw scaled by 2^-53, in [0, 1)
//   below(n)   : rejection sampling on the largest multiple of n, unbiased
//   normal()   : Box-Muller on two uniform() draws, the sine branch is cached
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n);
  // Inclusive on both ends.
  std::int64_t range(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::vector<int> permutation(int n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace chsnet
