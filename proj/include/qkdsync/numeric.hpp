#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace qkdsync::numeric {

inline constexpr double inv_sqrt2 = 0.70710678118654752440;
inline constexpr double inv_sqrt2pi = 0.39894228040143267794;

inline double normal_pdf(double z) { return inv_sqrt2pi * std::exp(-0.5 * z * z); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * inv_sqrt2); }

/// Phi(hi) - Phi(lo) for lo <= hi without cancellation in either tail.
inline double normal_cdf_diff(double lo, double hi) {
  if (lo >= 0.0) return 0.5 * (std::erfc(lo * inv_sqrt2) - std::erfc(hi * inv_sqrt2));
  if (hi <= 0.0) return 0.5 * (std::erfc(-hi * inv_sqrt2) - std::erfc(-lo * inv_sqrt2));
  return 1.0 - 0.5 * std::erfc(-lo * inv_sqrt2) - 0.5 * std::erfc(hi * inv_sqrt2);
}

/// Euclidean modulo into [0, period).
inline double wrap(double x, double period) {
  double r = std::fmod(x, period);
  if (r < 0.0) r += period;
  if (r >= period) r -= period;
  return r;
}

/// Euclidean integer modulo into [0, n).
inline std::int64_t wrap_index(std::int64_t i, std::int64_t n) {
  std::int64_t r = i % n;
  return r < 0 ? r + n : r;
}

/// Rounds `ratio` to the nearest integer and reports whether it was integral
/// to within a relative 1e-9.
inline bool is_integer_ratio(double numerator, double denominator, std::int64_t* out = nullptr) {
  const double ratio = numerator / denominator;
  const double rounded = std::round(ratio);
  if (out) *out = static_cast<std::int64_t>(rounded);
  return rounded >= 1.0 && std::abs(ratio - rounded) <= 1e-9 * rounded;
}

}  // namespace qkdsync::numeric
