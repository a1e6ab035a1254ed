#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>

namespace scl {

// SplitMix64: a 64-bit counter-based generator. The n-th output is
// mix(seed + n·0x9E3779B97F4A7C15), so any implementation that reproduces the
// mixing function and the derivations below reproduces every dataset and
// training run bit for bit.
//
//   uniform()   = (next_u64() >> 11) · 2^-53            in [0, 1)
//   below(n)    = rejection-sampled next_u64() mod n     in [0, n)
//   normal()    = Box–Muller on two uniform() draws (cosine branch only)
//   fork(s)     = Rng(mix(seed ^ mix(s)))
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Independent stream derived from this generator's seed.
  Rng fork(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + kGamma))); }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace scl
