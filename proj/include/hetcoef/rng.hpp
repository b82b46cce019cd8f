#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace hetcoef {

// Seedable, portable random source for the simulators. The engines below are
// defined bit-for-bit by their published recurrences, so the same seed yields
// the same stream on every platform and standard library. Distribution
// transforms are spelled out here for the same reason; std:: distributions
// are implementation-defined and would break reproducibility.

/// SplitMix64 (Steele, Lea, Flood). Used for seeding and stream derivation.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// xoshiro256++ (Blackman & Vigna), state seeded through SplitMix64.
class Xoshiro256PlusPlus {
 public:
  explicit Xoshiro256PlusPlus(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : state_) s = sm.next();
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller. Two uniforms per draw, no caching, so the
  /// stream position after k draws is always 2k.
  double normal() {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_;
};

/// Stream-splitting rule: substream `stream` of master seed `seed` is the
/// xoshiro seed SplitMix64(seed ^ golden * (stream + 1)).next(). Row i of a
/// simulation always uses stream i, so generation order never matters.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 sm(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
  return sm.next();
}

/// Draws an index in [0, probs.size()] from cumulative comparison against a
/// single uniform; index probs.size() carries the residual mass.
inline std::size_t categorical(Xoshiro256PlusPlus& rng,
                               const std::vector<double>& probs) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size();
}

}  // namespace hetcoef
