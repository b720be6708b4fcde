#pragma once

// Small deterministic PRNG used everywhere randomness is needed, so that runs
// are reproducible from a single 64-bit seed across platforms.  This is the
// PCG XSL-RR 128/64 generator (single-stream variant) with a 53-bit uniform
// double mapping; std::mt19937_64 is avoided because the standard library
// distributions are not bit-reproducible across implementations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace relgrad {

class Pcg64 {
 public:
  explicit Pcg64(std::uint64_t seed) {
    state_ = 0;
    bump();
    state_ += seed;
    bump();
  }

  // Next raw 64-bit output.
  std::uint64_t next_u64() {
    const u128 old = state_;
    bump();
    const std::uint64_t xored =
        static_cast<std::uint64_t>(old >> 64) ^ static_cast<std::uint64_t>(old);
    const unsigned rot = static_cast<unsigned>(old >> 122);
    return (xored >> rot) | (xored << ((-rot) & 63u));
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("Pcg64::uniform: empty interval");
    return lo + (hi - lo) * next_double();
  }

  // Uniform double strictly inside (lo, hi): redraws the (measure-zero) lower
  // endpoint so callers relying on open-interval draws never see it.
  double uniform_open(double lo, double hi) {
    double u;
    do {
      u = next_double();
    } while (u == 0.0);
    return lo + (hi - lo) * u;
  }

  // Standard normal via Box-Muller; the mate of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1;
    do {
      u1 = next_double();
    } while (u1 == 0.0);
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  // Fair +/-1 draw.
  double sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

 private:
  using u128 = unsigned __int128;

  void bump() { state_ = state_ * multiplier() + increment(); }

  static constexpr u128 multiplier() {
    return (u128{2549297995355413924ull} << 64) | 4865540595714422341ull;
  }
  static constexpr u128 increment() {
    return (u128{6364136223846793005ull} << 64) | 1442695040888963407ull;
  }

  u128 state_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Vector with i.i.d. uniform [lo, hi) components.
inline std::vector<double> random_vector(Pcg64& rng, std::size_t n, double lo = 0.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace relgrad
