#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "errors.hpp"
#include "numeric.hpp"
#include "units.hpp"

namespace qkdsync {

struct OpticalLink {
  double wavelength = 1550.0 * units::nm;
  double pulse_fwhm = 77.0 * units::ps;
  double chirp = -3.7e20;  // rad/s^2, phase beta*t^2
  double dispersion_coeff = 17.0 * units::ps_per_nm_km;
  double fiber_length = 120.0 * units::km;
  double attenuation_db_per_km = 0.2;
  double extra_loss_db = 0.0;

  void validate() const {
    detail::require(wavelength > 0.0, "wavelength must be positive");
    detail::require(pulse_fwhm > 0.0, "pulse_fwhm must be positive");
    detail::require(fiber_length >= 0.0, "fiber_length must be nonnegative");
    detail::require(attenuation_db_per_km >= 0.0, "attenuation must be nonnegative");
    detail::require(extra_loss_db >= 0.0, "extra_loss_db must be nonnegative");
  }

  /// 1/e intensity half width of the Gaussian envelope.
  double t_g() const { return pulse_fwhm / std::sqrt(2.0 * std::numbers::ln2); }

  /// Group velocity dispersion k'' in s^2/m.
  double gvd() const {
    return -wavelength * wavelength * dispersion_coeff / (units::two_pi * units::speed_of_light);
  }

  double total_loss_db() const {
    return attenuation_db_per_km * (fiber_length / units::km) + extra_loss_db;
  }
};

struct SpadModel {
  double skew_shape = 3.0;
  double skew_scale = 150.0 * units::ps;
  double efficiency = 0.25;
  double dead_time = 15.0 * units::us;
  double dark_count_rate = 1800.0;

  void validate() const {
    detail::require(skew_scale > 0.0, "skew_scale must be positive");
    detail::require(efficiency > 0.0 && efficiency <= 1.0, "efficiency must be in (0, 1]");
    detail::require(dead_time >= 0.0, "dead_time must be nonnegative");
    detail::require(dark_count_rate >= 0.0, "dark_count_rate must be nonnegative");
  }

  double delta() const { return skew_shape / std::sqrt(1.0 + skew_shape * skew_shape); }

  /// Location that puts the kernel mean at zero.
  double location() const { return -skew_scale * delta() * std::sqrt(2.0 / std::numbers::pi); }

  double variance() const {
    const double d = delta();
    return skew_scale * skew_scale * (1.0 - 2.0 * d * d / std::numbers::pi);
  }

  double stddev() const { return std::sqrt(variance()); }
};

/// Product of the chirp-dispersion parameter and distance. The z = 0 value is
/// the analytic limit (no 0/0).
inline double chirp_dispersion_product(const OpticalLink& link) {
  const double tg = link.t_g();
  const double tg4 = tg * tg * tg * tg;
  const double b2tg4 = link.chirp * link.chirp * tg4;
  return (2.0 * link.gvd() * link.fiber_length * (1.0 + b2tg4) + link.chirp * tg4) / (tg * tg);
}

inline double pulse_sigma_at_distance(const OpticalLink& link) {
  link.validate();
  const double tg = link.t_g();
  if (link.fiber_length == 0.0) return 0.5 * tg;
  const double tg4 = tg * tg * tg * tg;
  const double xz = chirp_dispersion_product(link);
  const double tgz2 = tg * tg * (1.0 + xz * xz) / (1.0 + link.chirp * link.chirp * tg4);
  return 0.5 * std::sqrt(tgz2);
}

inline double channel_transmittance(const OpticalLink& link) {
  link.validate();
  return std::pow(10.0, -link.total_loss_db() / 10.0);
}

inline double spad_kernel(const SpadModel& spad, double t) {
  const double w = spad.skew_scale;
  const double z = (t - spad.location()) / w;
  return 2.0 / w * numeric::normal_pdf(z) * numeric::normal_cdf(spad.skew_shape * z);
}

/// arg of the first Fourier coefficient of the kernel at period t_bin, by
/// composite Simpson over the kernel support.
inline double spad_phase_bias(const SpadModel& spad, double t_bin) {
  detail::require(t_bin > 0.0, "t_bin must be positive");
  spad.validate();
  const double sd = spad.stddev();
  const double lo = -8.0 * sd - 2.0 * spad.skew_scale;
  const double hi = 8.0 * sd + 2.0 * spad.skew_scale;
  const double step_target = std::min(0.1 * units::ps, spad.skew_scale / 200.0);
  long n = static_cast<long>(std::ceil((hi - lo) / step_target));
  if (n % 2) ++n;
  const double h = (hi - lo) / static_cast<double>(n);
  const double k = units::two_pi / t_bin;
  std::complex<double> acc{0.0, 0.0};
  for (long i = 0; i <= n; ++i) {
    const double u = lo + h * static_cast<double>(i);
    const double wgt = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += wgt * spad_kernel(spad, u) * std::polar(1.0, k * u);
  }
  if (std::abs(acc.imag()) < 1e-300) return 0.0;
  return std::arg(acc);
}

struct EffectiveRates {
  double cps_alice = 0.0;        // ideal, before dead time
  double cps_eff_alice = 0.0;
  double cps_eff_dc = 0.0;
  double detection_fraction = 0.0;

  double cps_eff_total() const { return cps_eff_alice + cps_eff_dc; }
};

inline EffectiveRates effective_rates(const SpadModel& spad, double f_alice, double mean_photon,
                                      double eta_ch) {
  detail::require(f_alice > 0.0, "f_A must be positive");
  detail::require(mean_photon >= 0.0 && eta_ch >= 0.0, "rates need nonnegative inputs");
  EffectiveRates r;
  r.cps_alice = f_alice * mean_photon * spad.efficiency * eta_ch;
  const double total = r.cps_alice + spad.dark_count_rate;
  const double denom = 1.0 + total * spad.dead_time;
  r.cps_eff_alice = r.cps_alice / denom;
  r.cps_eff_dc = spad.dark_count_rate / denom;
  r.detection_fraction = r.cps_eff_alice / f_alice;
  return r;
}

}  // namespace qkdsync
