#pragma once

#include <cmath>
#include <cstdint>

namespace noisyens {

/// Counter-based generator built on the splitmix64 finalizer.
///
/// Streams are derived from the key, not from mutable state, so split(i)
/// yields an independent sequence for every (key, i) pair regardless of how
/// much the parent stream has been consumed. Experiments derive one stream
/// per (seed, fold, realization) so parallel schedules cannot change results.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  CounterRng split(std::uint64_t stream) const {
    return CounterRng(mix(mix(key_ + 0x9E3779B97F4A7C15ull) ^
                          mix(stream + 0xD1B54A32D192ED03ull)));
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

  /// Uniform on [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; two uniforms per draw, no cached spare.
  double next_gauss() {
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Fisher-Yates shuffle of [first, last).
  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = next_u64() % i;
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace noisyens
