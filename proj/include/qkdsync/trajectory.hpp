#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "clock.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "units.hpp"

namespace qkdsync {

/// Stochastic part of Bob's clock phase relative to Alice's. white_fm is the
/// phase random-walk coefficient (s/sqrt(s)); random_walk_fm drives a
/// random-walk fractional frequency (1/sqrt(s)); path_jitter/path_tau add a
/// Gauss-Markov phase term (stationary std, correlation time) for link delay
/// wander.
struct OscillatorNoise {
  double white_fm = 0.0;
  double random_walk_fm = 0.0;
  double path_jitter = 0.0;
  double path_tau = 1.0;
  double grid = 1.0 * units::ms;

  bool enabled() const { return white_fm > 0.0 || random_walk_fm > 0.0 || path_jitter > 0.0; }
};

/// Time shift x(t) of Bob's clock against Alice time t: a piecewise
/// deterministic model (drift + aging, re-based at every frequency update)
/// plus optional oscillator noise on a uniform grid, linearly interpolated.
/// Noise queries must not go back more than `history` before the newest one.
class ClockTrajectory {
 public:
  ClockTrajectory(const ClockPair& clocks, const OscillatorNoise& noise, std::uint64_t seed,
                  double history = 2.0)
      : noise_(noise), rng_(make_rng(seed, stream::oscillator)), history_(history) {
    clocks.validate();
    segments_.push_back({0.0, clocks.static_offset, clocks.drift(), clocks.aging_rate});
    f_alice_ = clocks.f_alice;
    if (noise_.enabled()) {
      detail::require(noise_.grid > 0.0, "noise grid must be positive");
      if (noise_.path_jitter > 0.0) {
        detail::require(noise_.path_tau > 0.0, "path_tau must be positive");
        path_ = noise_.path_jitter * sample_normal(rng_);
      }
      xs_.push_back(path_);
    }
  }

  /// Deterministic drift at Alice time t.
  double drift_at(double t) const {
    const Segment& s = segment_for(t);
    return s.d + s.aging * (t - s.t);
  }

  double deterministic_shift(double t) const {
    const Segment& s = segment_for(t);
    const double u = t - s.t;
    return s.x + s.d * u + 0.5 * s.aging * u * u;
  }

  double noise_shift(double t) {
    if (!noise_.enabled()) return 0.0;
    const double g = t / noise_.grid;
    const double fl = std::floor(g);
    const auto k = static_cast<std::int64_t>(fl);
    const double f = g - fl;
    return (1.0 - f) * noise_at(k) + f * noise_at(k + 1);
  }

  double shift(double t) { return deterministic_shift(t) + noise_shift(t); }

  struct Window {
    double x_begin = 0.0;
    double x_end = 0.0;
    double mean = 0.0;
  };

  /// Endpoint values and time-average of x over [a, b].
  Window window(double a, double b) {
    Window w;
    w.x_begin = shift(a);
    w.x_end = shift(b);
    const double len = b - a;
    // Deterministic part is at most quadratic within one segment: Simpson is exact.
    double det = 0.0;
    const std::size_t i0 = segment_index(a);
    const std::size_t i1 = segment_index(b);
    for (std::size_t i = i0; i <= i1; ++i) {
      const double lo = std::max(a, segments_[i].t);
      const double hi = (i + 1 < segments_.size()) ? std::min(b, segments_[i + 1].t) : b;
      if (hi <= lo) continue;
      const double mid = 0.5 * (lo + hi);
      det += (hi - lo) / 6.0 * (eval(segments_[i], lo) + 4.0 * eval(segments_[i], mid) + eval(segments_[i], hi));
    }
    w.mean = det / len + noise_mean(a, b);
    return w;
  }

  /// Frequency update at Alice time t_u: f_B' = f_B / (1 + estimate).
  void apply_frequency_update(double t_u, double estimate) {
    detail::require(1.0 + estimate > 0.0, "1 + drift estimate must be positive");
    const Segment& last = segments_.back();
    if (t_u < last.t) throw ConfigError("frequency updates must be time ordered");
    const double d_now = last.d + last.aging * (t_u - last.t);
    segments_.push_back({t_u, deterministic_shift(t_u), residual_drift(d_now, estimate), last.aging});
  }

  /// Adds a constant to the deterministic phase from t_u on.
  void apply_phase_step(double t_u, double step) {
    const Segment& last = segments_.back();
    if (t_u < last.t) throw ConfigError("phase steps must be time ordered");
    segments_.push_back({t_u, deterministic_shift(t_u) + step, drift_at(t_u), last.aging});
  }

  double f_alice() const { return f_alice_; }
  std::size_t update_count() const { return segments_.size() - 1; }

 private:
  struct Segment {
    double t;
    double x;
    double d;
    double aging;
  };

  static double eval(const Segment& s, double t) {
    const double u = t - s.t;
    return s.x + s.d * u + 0.5 * s.aging * u * u;
  }

  std::size_t segment_index(double t) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double v, const Segment& s) { return v < s.t; });
    if (it == segments_.begin()) return 0;
    return static_cast<std::size_t>(it - segments_.begin()) - 1;
  }

  const Segment& segment_for(double t) const { return segments_[segment_index(t)]; }

  double noise_at(std::int64_t k) {
    if (k < 0) return 0.0;
    while (base_ + static_cast<std::int64_t>(xs_.size()) <= k) {
      const double g = noise_.grid;
      const double dx = noise_.white_fm * std::sqrt(g) * sample_normal(rng_) + ys_ * g;
      ys_ += noise_.random_walk_fm * std::sqrt(g) * sample_normal(rng_);
      walk_ += dx;
      if (noise_.path_jitter > 0.0) {
        const double a = std::exp(-g / noise_.path_tau);
        path_ = a * path_ + noise_.path_jitter * std::sqrt(1.0 - a * a) * sample_normal(rng_);
      }
      xs_.push_back(walk_ + path_);
    }
    const auto keep = static_cast<std::int64_t>(std::ceil(history_ / noise_.grid)) + 2;
    while (static_cast<std::int64_t>(xs_.size()) > 2 * keep) {
      xs_.pop_front();
      ++base_;
    }
    if (k < base_)
      throw ConfigError("ClockTrajectory: noise query older than retained history at t=" +
                        std::to_string(static_cast<double>(k) * noise_.grid));
    return xs_[static_cast<std::size_t>(k - base_)];
  }

  /// Time average of the interpolated noise over [a, b].
  double noise_mean(double a, double b) {
    if (!noise_.enabled()) return 0.0;
    const double g = noise_.grid;
    const double x0 = a / g;
    const double x1 = b / g;
    const auto i0 = static_cast<std::int64_t>(std::floor(x0));
    const auto i1 = static_cast<std::int64_t>(std::floor(x1));
    double acc = 0.0;
    for (std::int64_t i = i0; i <= i1; ++i) {
      const double u = std::max(x0 - static_cast<double>(i), 0.0);
      const double v = std::min(x1 - static_cast<double>(i), 1.0);
      if (!(v > u)) continue;
      const double ni = noise_at(i);
      const double nj = noise_at(i + 1);
      acc += (v - u) * ni + 0.5 * (v * v - u * u) * (nj - ni);
    }
    return acc / (x1 - x0);
  }

  OscillatorNoise noise_;
  Rng rng_;
  double history_;
  double f_alice_ = 0.0;
  std::vector<Segment> segments_;
  std::deque<double> xs_;
  std::int64_t base_ = 0;
  double ys_ = 0.0;
  double walk_ = 0.0;
  double path_ = 0.0;
};

}  // namespace qkdsync
