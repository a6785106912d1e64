#pragma once

#include <cmath>
#include <limits>

#include "errors.hpp"
#include "units.hpp"

namespace qkdsync {

struct ClockPair {
  double f_alice = 500.0 * units::MHz;
  double f_bob = 500.0 * units::MHz;
  double static_offset = 0.0;
  double aging_rate = 0.0;  // d t_drift / dt, 1/s
  double elapsed_since_calibration = 0.0;

  void validate() const {
    detail::require(f_alice > 0.0 && f_bob > 0.0, "clock frequencies must be positive");
    detail::require(std::abs(drift()) < 1.0, "|drift| must be below 1");
  }

  double drift() const { return (f_bob - f_alice) / f_alice; }

  static ClockPair with_drift(double f_alice, double drift, double static_offset = 0.0,
                              double aging_rate = 0.0) {
    ClockPair c;
    c.f_alice = f_alice;
    c.f_bob = f_alice * (1.0 + drift);
    c.static_offset = static_offset;
    c.aging_rate = aging_rate;
    return c;
  }
};

struct TimingBudget {
  double t_bin = 1.0 * units::ns;
  double t_int = 0.5 * units::s;
  double window_width = 300.0 * units::ps;
  double error_threshold = 1e-3;

  void validate() const {
    detail::require(t_bin > 0.0, "t_bin must be positive");
    detail::require(window_width > 0.0 && window_width <= t_bin, "window must be in (0, t_bin]");
    detail::require(t_int > 0.0, "t_int must be positive");
    detail::require(error_threshold > 0.0 && error_threshold < 0.5,
                    "error threshold must be in (0, 0.5)");
  }
};

inline double time_shift(const ClockPair& clocks, double t) {
  return clocks.drift() * t + 0.5 * clocks.aging_rate * t * t + clocks.static_offset;
}

inline double expected_arrival(const ClockPair& clocks, double t, double bin_center) {
  return clocks.drift() * t + clocks.static_offset + bin_center;
}

inline double max_unambiguous_drift(double t_bin, double tau_d) {
  if (!(tau_d > 0.0)) throw ConfigError("max_unambiguous_drift: unbounded for zero dead time");
  return t_bin / (2.0 * tau_d);
}

/// Returns +infinity when aging_rate is zero.
inline double max_calibration_interval(double aging_rate, double drift_limit) {
  if (aging_rate == 0.0) return std::numeric_limits<double>::infinity();
  return drift_limit / std::abs(aging_rate);
}

inline double max_calibration_interval(double aging_rate, double t_bin, double tau_d) {
  return max_calibration_interval(aging_rate, max_unambiguous_drift(t_bin, tau_d));
}

/// Aging rate (1/s) for a relative frequency change accumulated over a span,
/// doubled for two identical clocks aging in opposite directions.
inline double opposing_clocks_aging(double fractional_change, double span) {
  return 2.0 * fractional_change / span;
}

inline double short_term_stability_bound(const TimingBudget& budget, double drift_limit) {
  detail::require(budget.t_int > 0.0, "t_int must be positive");
  return drift_limit / (4.0 * budget.t_int * budget.t_int);
}

inline ClockPair apply_frequency_update(const ClockPair& clocks, double drift_estimate) {
  detail::require(1.0 + drift_estimate > 0.0, "1 + drift estimate must be positive");
  ClockPair out = clocks;
  out.f_bob = clocks.f_bob / (1.0 + drift_estimate);
  return out;
}

/// Residual drift after a frequency update, in rational form.
inline double residual_drift(double drift, double drift_estimate) {
  return (drift - drift_estimate) / (1.0 + drift_estimate);
}

inline double init_alice_calibration(const ClockPair& clocks, double drift_estimate,
                                     double target_drift) {
  detail::require(1.0 + target_drift > 0.0, "1 + target drift must be positive");
  return clocks.f_alice * (1.0 + drift_estimate) / (1.0 + target_drift);
}

/// Drift of clock B relative to clock A when both drift against a common
/// reference by drift_a and drift_b.
inline double compose_drift(double drift_a, double drift_b) {
  return (drift_b - drift_a) / (1.0 + drift_a);
}

}  // namespace qkdsync
