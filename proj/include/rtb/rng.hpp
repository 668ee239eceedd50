#pragma once

// Deterministic random number streams.
//
// Every stochastic routine in this library takes an explicit Rng argument.
// Streams are derived from a master seed plus an integer path (replicate,
// method, imputation, ...), so the draw sequence of any unit of work is a
// pure function of its indices and never of the thread schedule.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <stdexcept>

namespace rtb {

namespace detail {

// splitmix64 finalizer (Steele/Lea/Vigna).
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// xoshiro256++ generator with splitmix64-based stream derivation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64_next(sm);
  }

  /// Independent stream addressed by (seed, path). Distinct paths give
  /// statistically independent sequences; the same path always gives the
  /// same sequence.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t key = seed;
    detail::splitmix64_next(key);
    for (std::uint64_t tag : path) {
      key ^= detail::splitmix64_next(key) + tag;
      detail::splitmix64_next(key);
    }
    key ^= 0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(path.size());
    return Rng(key);
  }

  /// Child stream keyed by this stream's current position.
  Rng spawn() { return Rng(next_u64() ^ 0x6a09e667f3bcc909ULL); }

  std::uint64_t next_u64() {
    const std::uint64_t result =
        detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (cosine branch; two uniforms per draw).
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n) {
    // multiply-shift with rejection of the biased tail
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = next_u64();
      const auto m = static_cast<unsigned __int128>(x) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) {
        return static_cast<std::uint64_t>(m >> 64);
      }
    }
  }

  /// Gamma(shape, 1) for shape >= 1, Marsaglia-Tsang squeeze method.
  double gamma(double shape) {
    if (shape < 1.0) {
      throw std::invalid_argument("Rng::gamma: shape must be >= 1");
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      const double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      const double v = t * t * t;
      const double u = uniform01();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
        return d * v;
      }
    }
  }

  /// Chi-square with nu >= 2 degrees of freedom.
  double chi_square(double nu) { return 2.0 * gamma(0.5 * nu); }

 private:
  std::uint64_t state_[4];
};

// Stream purpose tags used when deriving keyed sub-streams. Call sites pass
// these as the first path element so distinct purposes never share a stream.
namespace stream_tag {
inline constexpr std::uint64_t kGenerate = 1;
inline constexpr std::uint64_t kMissingness = 2;
inline constexpr std::uint64_t kMethod = 3;
inline constexpr std::uint64_t kBootstrap = 4;
inline constexpr std::uint64_t kTruth = 5;
}  // namespace stream_tag

}  // namespace rtb
