#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>

#include "ppfe/error.hpp"
#include "ppfe/tensor.hpp"

namespace ppfe {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer (Steele, Lea, Flood). Used to seed xoshiro state and to mix labels.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

/// FNV-1a, 64 bit.
inline constexpr std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline constexpr std::uint64_t to_label(std::uint64_t v) { return v; }
inline constexpr std::uint64_t to_label(std::string_view s) { return hash_label(s); }
inline constexpr std::uint64_t to_label(const char* s) { return hash_label(s); }

}  // namespace detail

/// xoshiro256** generator.
///
/// The 256-bit state is filled from four successive SplitMix64 outputs starting at `seed`.
/// Child streams are derived from the *seed* (never the current state), so a child
/// depends only on (seed, labels):
///
///   child_seed = splitmix64(seed ^ splitmix64(label + kGolden))   applied label by label
///
/// String labels are hashed with FNV-1a 64. Uniform doubles use the top 53 bits.
/// Normals use Box-Muller with one fresh uniform pair per draw (no caching).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      s = detail::splitmix64(x);
      x += detail::kGolden;
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling, unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: empty range");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the U^(1/shape) boost.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw InvalidArgument("gamma: shape must be positive");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      const double u = 1.0 - uniform();
      return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = 1.0 - uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream keyed by one or more labels (integers or strings).
  template <typename... Labels>
  Rng derive(const Labels&... labels) const {
    std::uint64_t s = seed_;
    ((s = detail::splitmix64(s ^ detail::splitmix64(detail::to_label(labels) + detail::kGolden))),
     ...);
    return Rng(s);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4]{};
};

/// Matrix of i.i.d. N(mean, std^2) entries.
inline Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev) {
  if (!(stddev >= 0.0)) throw InvalidArgument("gaussian: standard deviation must be >= 0");
  Matrix m(rows, cols);
  for (double& v : m.data()) v = mean + stddev * rng.normal();
  return m;
}

}  // namespace ppfe
