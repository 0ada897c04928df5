#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace iboss::rng {

// splitmix64 output function. Used both as the generator step and as a
// cheap hash when deriving stream keys.
inline std::uint64_t mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

// Derives an independent stream key from a user seed, a component label and
// an index (row, block, replication). Every consumer draws from its own
// stream, so generation order does not depend on thread scheduling.
inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t label,
                                std::uint64_t index = 0) noexcept {
  std::uint64_t k = mix(seed + kGamma);
  k = mix(k ^ (label * kGamma));
  k = mix(k ^ (index * kGamma));
  return k;
}

// Labels for the independent streams drawn during data generation and
// subsampling. Values are arbitrary but frozen: changing them changes
// every generated dataset.
namespace label {
inline constexpr std::uint64_t kGauss = 0x67617573;       // covariate normals
inline constexpr std::uint64_t kChi = 0x63686921;         // t-mixing chi-square
inline constexpr std::uint64_t kUniform = 0x756e6966;     // iid uniform covariates
inline constexpr std::uint64_t kNoise = 0x6e6f6973;       // response noise
inline constexpr std::uint64_t kShuffle = 0x73687566;     // block assignment
inline constexpr std::uint64_t kPoisson = 0x706f6973;     // subsampling baseline
inline constexpr std::uint64_t kMixComponent = 0x6d697863;  // mixture sub-seeds
inline constexpr std::uint64_t kMixShuffle = 0x6d697873;    // mixture row permutation
inline constexpr std::uint64_t kExperiment = 0x65787065;    // per-N dataset seeds
inline constexpr std::uint64_t kReplication = 0x7265706c;   // per-replication seeds
}  // namespace label

// Counter-based splitmix64 stream. next() is mix(key + n*gamma) for
// n = 1, 2, ...; the whole sequence is determined by the key alone.
class Stream {
 public:
  explicit Stream(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next() noexcept { return mix(key_ + (++n_) * kGamma); }

  // Uniform on [0, 1): top 53 bits scaled down.
  double next_unit() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; used where a log is taken.
  double next_unit_pos() noexcept {
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double next_gaussian() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit_pos();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Unbiased uniform integer in [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % bound;
  }

 private:
  std::uint64_t key_;
  std::uint64_t n_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// In-place Fisher-Yates driven by one stream. Deterministic across
// platforms, unlike std::shuffle with a standard engine.
template <typename T>
void shuffle(std::span<T> items, Stream& stream) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.next_below(i));
    if (j != i - 1) std::swap(items[i - 1], items[j]);
  }
}

}  // namespace iboss::rng
