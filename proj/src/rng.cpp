#include "alsubset/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace alsubset {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(base);
  for (std::uint64_t tag : tags) {
    h = mix64(h ^ mix64(tag + 0x632BE59BD9B4E019ull));
  }
  return h;
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("Rng::below: empty range");
  }
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

}  // namespace alsubset
