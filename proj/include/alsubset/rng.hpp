#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace alsubset {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives a child seed from a base seed and a list of tags. Every random
/// stream in the project is named this way so runs never share a generator.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Seeded generator with platform-independent draws. The engine is
/// mt19937_64; distributions are implemented here because the standard
/// library's are allowed to differ between implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Standard normal draw (Box-Muller, cached pair).
  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace alsubset
