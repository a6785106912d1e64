#pragma once

// Random streams: std::mt19937_64 seeded through splitmix64 so that each
// (seed, stream id) pair gets an independent, reproducible generator.

#include <cmath>
#include <cstdint>
#include <random>

#include "physics.hpp"

namespace qkdsync {

using Rng = std::mt19937_64;

inline constexpr const char* kRngName = "mt19937_64/splitmix64";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Fixed stream ids so that adding a consumer never shifts another's draws.
namespace stream {
inline constexpr std::uint64_t photons = 1;
inline constexpr std::uint64_t darks = 2;
inline constexpr std::uint64_t oscillator = 3;
inline constexpr std::uint64_t bits = 4;
inline constexpr std::uint64_t flips = 5;
inline constexpr std::uint64_t poisson = 6;
inline constexpr std::uint64_t offset = 7;
inline constexpr std::uint64_t pattern = 8;
}  // namespace stream

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream_id) {
  return Rng(derive_seed(seed, stream_id));
}

/// Counter-based uniform in [0, 1) from (key, counter).
inline double hash_uniform(std::uint64_t key, std::uint64_t counter) {
  return static_cast<double>(splitmix64(key ^ splitmix64(counter)) >> 11) * 0x1.0p-53;
}

inline double sample_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Zero-mean skew-normal draw: loc + w (delta |u0| + sqrt(1 - delta^2) u1).
inline double sample_spad_jitter(Rng& rng, const SpadModel& spad) {
  const double d = spad.delta();
  const double u0 = std::abs(sample_normal(rng));
  const double u1 = sample_normal(rng);
  return spad.location() + spad.skew_scale * (d * u0 + std::sqrt(1.0 - d * d) * u1);
}

}  // namespace qkdsync
