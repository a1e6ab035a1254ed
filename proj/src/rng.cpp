#include "scl/rng.hpp"

#include <cmath>
#include <numbers>

#include "scl/errors.hpp"

namespace scl {

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ParameterError("Rng::below(0)");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Reject the top sliver so that every residue is equally likely.
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return static_cast<std::size_t>(v % bound);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace scl
