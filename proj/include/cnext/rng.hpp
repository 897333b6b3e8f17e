#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cnext {

using Engine = std::mt19937_64;

inline constexpr std::uint64_t kDefaultSeed = 42;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive an independent seed from a root seed and a tuple of counters.
/// The result depends only on its arguments, never on call order.
template <typename... Counters>
constexpr std::uint64_t substream_seed(std::uint64_t root, Counters... counters) noexcept {
  std::uint64_t h = mix64(root);
  ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(counters) + 0x632be59bd9b4e019ULL))), ...);
  return h;
}

template <typename... Counters>
Engine make_engine(std::uint64_t root, Counters... counters) {
  return Engine(substream_seed(root, counters...));
}

// The std distributions are implementation-defined, so the samplers below
// are written against raw engine output to keep streams identical across
// standard libraries.

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Engine& rng, double prob) { return uniform01(rng) < prob; }

/// Standard normal via Box-Muller (one draw per call).
inline double standard_normal(Engine& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform integer in [0, bound) by rejection.
inline std::uint64_t uniform_index(Engine& rng, std::uint64_t bound) {
  // 2^64 mod bound; values below it would bias the low residues.
  const std::uint64_t threshold = (std::uint64_t{0} - bound) % bound;
  std::uint64_t v = rng();
  while (v < threshold) v = rng();
  return v % bound;
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename Vec>
void shuffle(Vec& v, Engine& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace cnext
