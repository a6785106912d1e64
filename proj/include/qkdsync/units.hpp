#pragma once

// All quantities inside the library are SI doubles (seconds, metres, hertz).
// These constants convert from the units the hardware and the literature use.

#include <numbers>

namespace qkdsync::units {

inline constexpr double s = 1.0;
inline constexpr double ms = 1e-3;
inline constexpr double us = 1e-6;
inline constexpr double ns = 1e-9;
inline constexpr double ps = 1e-12;
inline constexpr double fs = 1e-15;

inline constexpr double m = 1.0;
inline constexpr double km = 1e3;
inline constexpr double nm = 1e-9;

inline constexpr double Hz = 1.0;
inline constexpr double kHz = 1e3;
inline constexpr double MHz = 1e6;

/// Fiber dispersion coefficient: 1 ps/(nm km) expressed in s/m^2.
inline constexpr double ps_per_nm_km = ps / (nm * km);

inline constexpr double speed_of_light = 299'792'458.0;  // m/s, exact

inline constexpr double two_pi = 2.0 * std::numbers::pi;

}  // namespace qkdsync::units
