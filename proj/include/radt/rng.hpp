#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace radt {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the n-th draw is a pure function of (key, n),
/// so streams can be split and replayed without shared state.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key = 0) noexcept : key_(mix64(key)) {}

  /// Independent child stream identified by `stream`.
  [[nodiscard]] constexpr CounterRng split(std::uint64_t stream) const noexcept {
    CounterRng child;
    child.key_ = mix64(key_ ^ mix64(stream + 0x632be59bd9b4e019ULL));
    return child;
  }

  constexpr std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next_u64() % n; }

  double normal() noexcept {
    // Box-Muller; u1 kept away from zero.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Normal(0, stddev) resampled until it lies within two standard deviations.
  double truncated_normal(double stddev) noexcept {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * stddev;
    }
  }

  [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace radt
