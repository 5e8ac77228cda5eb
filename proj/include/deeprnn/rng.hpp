// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace deeprnn {

/// Counter-based SplitMix64 generator.
///
/// Draw i (0-based) of a stream with seed s is mix64(s + (i + 1) * 0x9E3779B97F4A7C15),
/// which is the classic SplitMix64 sequence. For seed 1234567 the first three
/// draws are 6457827717110365317, 3203168211198807973, 9817491932198370423.
///
/// split(key) derives an independent child stream whose seed is
/// mix64(seed ^ mix64(key + 0x632BE59BD9B4E019)); it does not advance the parent.
///
/// uniform() uses the top 53 bits: (u64 >> 11) * 2^-53, in [0, 1).
/// normal() is Box-Muller on two consecutive uniforms u1, u2 and returns the
/// cosine branch sqrt(-2 ln(1 - u1)) * cos(2 pi u2); every call consumes exactly two draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * kGamma);
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, bound). Uses rejection to stay unbiased.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % bound));
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

  Rng split(std::uint64_t key) const { return Rng(mix64(seed_ ^ mix64(key + 0x632BE59BD9B4E019ULL))); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace deeprnn
