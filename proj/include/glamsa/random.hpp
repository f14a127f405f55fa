#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace glamsa {

/// SplitMix64 finalizer, used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seeded random stream. Uniforms are built from raw engine bits so the
/// sequence only depends on the seed, not on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  /// Child stream keyed by (seed, ids...). Distinct id tuples give independent streams.
  static Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
    for (auto id : ids) h = mix64(h ^ mix64(id + 0x14057b7ef767814fULL));
    return Rng(h);
  }

  /// Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via the polar Box-Muller method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double v1, v2, s;
    do {
      v1 = 2.0 * uniform() - 1.0;
      v2 = 2.0 * uniform() - 1.0;
      s = v1 * v1 + v2 * v2;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v2 * f;
    has_spare_ = true;
    return v1 * f;
  }

  /// Exponential with the given rate (rate > 0).
  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace glamsa
