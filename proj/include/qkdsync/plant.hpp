#pragma once

// Acquisition sources for the closed loop. EventPlant drives the full
// timestamp simulator; PoissonPlant samples per-bin Poisson counts from the
// analytic pdf of the current trajectory window, which is what makes
// day-long runs cheap.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "mc_sim.hpp"
#include "pdf_engine.hpp"
#include "physics.hpp"
#include "rng.hpp"
#include "sync.hpp"
#include "trajectory.hpp"

namespace qkdsync {

class EventPlant {
 public:
  EventPlant(const SimScenario& sc, double window, AssignmentRule rule = AssignmentRule::sifted)
      : sc_(sc), traj_(sc.clocks, sc.noise, sc.rng_seed), src_(sc_, traj_), tdc_(sc.tdc), window_(window), rule_(rule) {
    sc_.validate();
  }

  Acquisition acquire(double t_int, double n_bar, bool want_pattern) {
    src_.set_mean_photon(n_bar);
    events_.clear();
    const double t0 = src_.now();
    src_.generate_until(t0 + t_int, events_);
    const double period = sc_.slot_period();
    Acquisition a;
    a.t_start = t0;
    a.t_end = t0 + t_int;
    a.hist = build_histogram(events_, tdc_, a.t_start, a.t_end, period, period);
    if (want_pattern) {
      detail::require(!sc_.qubit_pattern.empty(), "pattern histogram needs a qubit pattern");
      a.pattern = build_histogram(events_, tdc_, a.t_start, a.t_end,
                                  period * static_cast<double>(sc_.qubit_pattern.size()), period);
    }
    a.qber = measure_qber(events_, qber_context());
    return a;
  }

  void apply_frequency_update(double estimate) { traj_.apply_frequency_update(src_.now(), estimate); }
  void add_delay_steps(std::int64_t steps) { tdc_.delay_steps += steps; }
  double delay_resolution() const { return tdc_.delay_resolution; }
  double bin_width() const { return tdc_.bin_width; }

  QberContext qber_context() const {
    QberContext c;
    c.t_bin = sc_.t_bin;
    c.slot_period = sc_.slot_period();
    c.delay_register = tdc_.delay_register();
    c.window = window_;
    c.qubits = sc_.qubits();
    c.intrinsic_error = sc_.intrinsic_error;
    c.flip_key = derive_seed(sc_.rng_seed, stream::flips);
    c.rule = rule_;
    return c;
  }

  const std::vector<Event>& last_events() const { return events_; }
  ClockTrajectory& trajectory() { return traj_; }
  const TdcModel& tdc() const { return tdc_; }

 private:
  SimScenario sc_;
  ClockTrajectory traj_;
  EventSource src_;
  TdcModel tdc_;
  double window_;
  AssignmentRule rule_;
  std::vector<Event> events_;
};

/// Per-bin Poisson sampler driven by the trajectory window of each
/// acquisition. Starts with the pattern offset already resolved, so QBER is
/// the drift/jitter error of the lobes plus darks and intrinsic flips. The
/// filtered counts are drawn as a binomial thinning of the unfiltered ones.
class PoissonPlant {
 public:
  PoissonPlant(const SimScenario& sc, double window, double grid_step = 0.5 * units::ps)
      : sc_(sc),
        traj_(sc.clocks, sc.noise, sc.rng_seed),
        rng_(make_rng(sc.rng_seed, stream::poisson)),
        tdc_(sc.tdc),
        window_(window),
        step_(grid_step),
        sigma_(pulse_sigma_at_distance(sc.link)),
        eta_ch_(channel_transmittance(sc.link)) {
    sc_.validate();
  }

  Acquisition acquire(double t_int, double n_bar, bool want_pattern) {
    detail::require(!want_pattern, "PoissonPlant does not produce pattern histograms");
    const double t0 = now_;
    const double t1 = now_ + t_int;
    now_ = t1;
    const ClockTrajectory::Window w = traj_.window(t0, t1);
    const double smear = w.x_end - w.x_begin;
    const Lobe& lobe = lobe_for(smear);
    // Early-lobe mean position within the slot frame.
    const double shift = 0.5 * sc_.t_bin + w.mean + tdc_.delay_register();
    const EffectiveRates rates = effective_rates(sc_.spad, sc_.clocks.f_alice, n_bar, eta_ch_);
    const double period = sc_.slot_period();

    Acquisition a;
    a.t_start = t0;
    a.t_end = t1;
    const std::size_t nb = tdc_.bins(period);
    a.hist = empty_histogram(nb, tdc_.bin_width, t0, t_int);
    for (std::size_t k = 0; k < nb; ++k) {
      const double lo = static_cast<double>(k) * tdc_.bin_width - shift;
      // Early and late lobes contribute equally after the shift by T_bin.
      const double pe = lobe.folded.integrate(lo, lo + tdc_.bin_width);
      const double pl = lobe.folded.integrate(lo - sc_.t_bin, lo - sc_.t_bin + tdc_.bin_width);
      const double lambda = t_int * (rates.cps_eff_alice * 0.5 * (pe + pl) + rates.cps_eff_dc / static_cast<double>(nb));
      if (lambda > 0.0) a.hist.add(k, std::poisson_distribution<std::int64_t>(lambda)(rng_));
    }

    const double wrong = lobe.folded.integrate(sc_.t_bin - shift, 2.0 * sc_.t_bin - shift);
    const double in_own = lobe.folded.integrate(0.5 * sc_.t_bin - 0.5 * window_ - shift, 0.5 * sc_.t_bin + 0.5 * window_ - shift);
    const double in_other = lobe.folded.integrate(1.5 * sc_.t_bin - 0.5 * window_ - shift, 1.5 * sc_.t_bin + 0.5 * window_ - shift);
    const double e_i = sc_.intrinsic_error;
    auto flipped = [e_i](double q) { return q * (1.0 - e_i) + (1.0 - q) * e_i; };

    const auto n_sig = a.hist.total;  // all detections, signal and dark
    const double frac_dark = rates.cps_eff_total() > 0.0 ? rates.cps_eff_dc / rates.cps_eff_total() : 0.0;
    const std::int64_t n_dark = binomial(n_sig, frac_dark);
    const std::int64_t n_photon = n_sig - n_dark;
    QberResult& q = a.qber;
    q.n_unfiltered = n_sig;
    q.errors_unfiltered = binomial(n_photon, flipped(wrong)) + binomial(n_dark, 0.5);
    const double keep_photon = in_own + in_other;
    const std::int64_t kept_photon = binomial(n_photon, keep_photon);
    const std::int64_t kept_dark = binomial(n_dark, 2.0 * window_ / period);
    q.n_filtered = kept_photon + kept_dark;
    q.errors_filtered = binomial(kept_photon, keep_photon > 0.0 ? flipped(in_other / keep_photon) : 0.0) + binomial(kept_dark, 0.5);
    if (q.n_unfiltered > 0) {
      q.qber_unfiltered = static_cast<double>(q.errors_unfiltered) / static_cast<double>(q.n_unfiltered);
      q.kept_fraction = static_cast<double>(q.n_filtered) / static_cast<double>(q.n_unfiltered);
    }
    if (q.n_filtered > 0) q.qber_filtered = static_cast<double>(q.errors_filtered) / static_cast<double>(q.n_filtered);
    return a;
  }

  void apply_frequency_update(double estimate) { traj_.apply_frequency_update(now_, estimate); }
  void add_delay_steps(std::int64_t steps) { tdc_.delay_steps += steps; }
  double delay_resolution() const { return tdc_.delay_resolution; }
  double bin_width() const { return tdc_.bin_width; }
  ClockTrajectory& trajectory() { return traj_; }
  std::size_t cached_lobes() const { return cache_.size(); }

 private:
  struct Lobe {
    ArrivalPdf folded;  // zero-mean early lobe folded over the slot period
  };

  /// Lobes are cached by smear rounded to 1 ps.
  const Lobe& lobe_for(double smear) {
    const auto key = static_cast<std::int64_t>(std::llround(smear / units::ps));
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double d = static_cast<double>(key) * units::ps;
    ArrivalPdf p = drift_pdf_grid(sigma_, d, 0.0, -0.5 * d, step_);
    p = convolve_spad(p, sc_.spad);
    Lobe lobe{fold(p, sc_.slot_period())};
    return cache_.emplace(key, std::move(lobe)).first->second;
  }

  std::int64_t binomial(std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return std::binomial_distribution<std::int64_t>(n, p)(rng_);
  }

  SimScenario sc_;
  ClockTrajectory traj_;
  Rng rng_;
  TdcModel tdc_;
  double window_;
  double step_;
  double sigma_;
  double eta_ch_;
  double now_ = 0.0;
  std::map<std::int64_t, Lobe> cache_;
};

/// QBER expected in tracking: drift-free lobe error plus dark counts and
/// intrinsic flips.
inline double baseline_qber(const SimScenario& sc, double n_bar, double window_width) {
  QberParams p;
  p.sigma = pulse_sigma_at_distance(sc.link);
  p.spad = sc.spad;
  p.drift_product = 0.0;
  p.window = window_width;
  p.t_bin = sc.t_bin;
  const LobeMasses m = lobe_masses(p);
  const double e_i = sc.intrinsic_error;
  const double q = m.wrong / (m.correct + m.wrong);
  const double q_flip = q * (1.0 - e_i) + (1.0 - q) * e_i;
  const EffectiveRates r = effective_rates(sc.spad, sc.clocks.f_alice, n_bar, channel_transmittance(sc.link));
  if (window_width >= sc.t_bin) {
    const double fd = r.cps_eff_dc / r.cps_eff_total();
    return (1.0 - fd) * q_flip + 0.5 * fd;
  }
  const double sig = r.cps_eff_alice * (m.correct + m.wrong);
  const double dark = r.cps_eff_dc * window_width / sc.t_bin;
  return (sig * q_flip + 0.5 * dark) / (sig + dark);
}

}  // namespace qkdsync
