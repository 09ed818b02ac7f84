#pragma once

// Deterministic randomness shared by every stochastic part of the toolkit.
//
// Generator: Philox4x32-10 (Salmon et al., Random123), a counter-based PRNG.
// Each call maps a 128-bit counter and a 64-bit key to 128 random bits, so any
// draw can be reproduced in isolation from its coordinates:
//
//   key     = 64-bit seed (low word, high word)
//   counter = (index, domain tag, row low word, row high word)
//
// Mask bits use tag kTagMasks with index = column block of 4 columns; each
// column j gets output word j % 4 of block j / 4 and is set when that word is
// below floor(density * 2^32). Other consumers (photon counts, raster plans)
// use their own tag and a running index.

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace cdm {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

enum class StreamTag : std::uint32_t { kMasks = 0, kCounts = 1, kRaster = 2, kTest = 0xffu };

inline Philox4x32Key key_from_seed(std::uint64_t seed) noexcept {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// Sequential stream over one (seed, tag, row) coordinate.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, StreamTag tag, std::uint64_t row) noexcept
      : key_(key_from_seed(seed)), tag_(static_cast<std::uint32_t>(tag)), row_(row) {}

  std::uint32_t next_u32() noexcept {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1), safe for log().
  double uniform_open() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  // Uniform integer in [0, n) by rejection, n >= 1.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x < limit) return x % n;
    }
  }

  // Poisson variate: inversion for small means, PTRS transformed rejection (Hoermann 1993) otherwise.
  std::uint64_t poisson(double mean) noexcept {
    if (!(mean > 0.0)) return 0;
    if (mean < 10.0) {
      const double enlam = std::exp(-mean);
      std::uint64_t k = 0;
      double prod = 1.0;
      for (;;) {
        prod *= uniform();
        if (prod <= enlam) return k;
        ++k;
      }
    }
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform_open();
      const double us = 0.5 - std::fabs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <= -mean + kf * loglam - std::lgamma(kf + 1.0))
        return static_cast<std::uint64_t>(kf);
    }
  }

 private:
  void refill() noexcept {
    buf_ = philox4x32_10({static_cast<std::uint32_t>(index_), tag_, static_cast<std::uint32_t>(row_),
                          static_cast<std::uint32_t>(row_ >> 32)},
                         key_);
    ++index_;
    pos_ = 0;
  }

  Philox4x32Key key_;
  std::uint32_t tag_;
  std::uint64_t row_;
  std::uint64_t index_{0};
  Philox4x32Counter buf_{};
  int pos_{4};
};

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Child seed for a run coordinate tuple; order matters.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords) noexcept {
  std::uint64_t h = splitmix64(master);
  for (const auto c : coords) h = splitmix64(h ^ splitmix64(c));
  return h;
}

}  // namespace cdm
