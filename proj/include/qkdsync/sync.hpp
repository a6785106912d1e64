#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "mc_sim.hpp"
#include "numeric.hpp"
#include "pdf_engine.hpp"
#include "physics.hpp"
#include "units.hpp"

namespace qkdsync {

struct CircularMean {
  std::complex<double> value{0.0, 0.0};
  std::int64_t count = 0;

  double modulus() const { return std::abs(value); }
  double angle() const { return std::arg(value); }
};

/// Phasor mean of bin centers at period t_bin. The histogram period must be
/// a whole number of t_bin.
inline CircularMean circular_mean(const Histogram& hist, double t_bin) {
  if (hist.total < 1) throw FlatHistogramError("circular_mean: no counts");
  std::int64_t ratio = 0;
  if (!numeric::is_integer_ratio(hist.period(), t_bin, &ratio))
    throw ConfigError("circular_mean: histogram period must be a multiple of t_bin");
  const double k = units::two_pi / t_bin;
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    if (hist.counts[i] == 0) continue;
    acc += static_cast<double>(hist.counts[i]) * std::polar(1.0, k * hist.bin_center(i));
  }
  return {acc / static_cast<double>(hist.total), hist.total};
}

/// Same estimator on expected (non-integer) bin contents.
inline CircularMean circular_mean(const std::vector<double>& weights, double bin_width, double t_bin) {
  const double k = units::two_pi / t_bin;
  std::complex<double> acc{0.0, 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i] * std::polar(1.0, k * (static_cast<double>(i) + 0.5) * bin_width);
    total += weights[i];
  }
  if (!(total > 0.0)) throw FlatHistogramError("circular_mean: no counts");
  return {acc / total, static_cast<std::int64_t>(std::llround(total))};
}

inline constexpr double kDefaultModulusFloor = 0.05;

inline double estimate_drift(const CircularMean& m1, const CircularMean& m2, double t_int, double t_bin,
                             double modulus_floor = kDefaultModulusFloor) {
  if (m1.modulus() < modulus_floor || m2.modulus() < modulus_floor)
    throw FlatHistogramError("estimate_drift: flat histogram (|m1|=" + std::to_string(m1.modulus()) +
                             ", |m2|=" + std::to_string(m2.modulus()) + ")");
  return t_bin / (units::two_pi * t_int) * std::arg(m2.value * std::conj(m1.value));
}

/// Center of the detection-time distribution in [0, t_bin), bias-corrected.
inline double circular_center(const CircularMean& m, double t_bin, double phi_q) {
  return numeric::wrap(t_bin / units::two_pi * (m.angle() - phi_q), t_bin);
}

/// Delay increment that moves the end-of-acquisition center to mu_e, in
/// (mu_e - t_bin, mu_e].
inline double estimate_delay(const CircularMean& m1, double drift_estimate, double t_int, double t_bin,
                             double mu_e, double phi_q) {
  const double c = t_bin / units::two_pi * (m1.angle() - phi_q) + 1.5 * drift_estimate * t_int;
  return mu_e - numeric::wrap(c, t_bin);
}

/// Equivalent form from the second histogram.
inline double estimate_delay_from_m2(const CircularMean& m2, double drift_estimate, double t_int, double t_bin,
                                     double mu_e, double phi_q) {
  const double c = t_bin / units::two_pi * (m2.angle() - phi_q) + 0.5 * drift_estimate * t_int;
  return mu_e - numeric::wrap(c, t_bin);
}

/// Expected counts per bin over one pattern period for a lobe whose early
/// center sits at mu_e of each slot.
inline std::vector<double> pattern_template(const std::vector<std::uint8_t>& pattern, const ArrivalPdf& early_lobe,
                                            double t_bin, double bin_width) {
  if (early_lobe.folded()) throw ConfigError("pattern_template: lobe must be unfolded");
  const double slot = 2.0 * t_bin;
  std::int64_t bins_per_slot = 0;
  if (!numeric::is_integer_ratio(slot, bin_width, &bins_per_slot))
    throw ConfigError("pattern_template: slot must be a whole number of bins");
  std::int64_t late_shift = 0;
  if (!numeric::is_integer_ratio(t_bin, bin_width, &late_shift))
    throw ConfigError("pattern_template: t_bin must be a whole number of bins");
  const auto j_lo = static_cast<std::int64_t>(std::floor(early_lobe.front_time() / bin_width));
  const auto j_hi = static_cast<std::int64_t>(std::floor(early_lobe.back_time() / bin_width));
  std::vector<double> lobe_bins;
  for (std::int64_t j = j_lo; j <= j_hi; ++j)
    lobe_bins.push_back(early_lobe.integrate(static_cast<double>(j) * bin_width, static_cast<double>(j + 1) * bin_width));
  const auto n = static_cast<std::int64_t>(pattern.size()) * bins_per_slot;
  std::vector<double> tmpl(static_cast<std::size_t>(n), 0.0);
  for (std::size_t s = 0; s < pattern.size(); ++s) {
    const std::int64_t base = static_cast<std::int64_t>(s) * bins_per_slot + (pattern[s] ? late_shift : 0);
    for (std::size_t q = 0; q < lobe_bins.size(); ++q)
      tmpl[static_cast<std::size_t>(numeric::wrap_index(base + j_lo + static_cast<std::int64_t>(q), n))] += lobe_bins[q];
  }
  return tmpl;
}

struct OffsetLock {
  std::int64_t shift_bins = 0;  // signed, in (-n/2, n/2]
  double shift = 0.0;           // shift_bins * bin_width
  double correlation = 0.0;
};

inline constexpr double kDefaultPearsonThreshold = 0.5;

/// Cyclic shift k maximizing Pearson(hist[i + k], template[i]).
inline OffsetLock recover_offset(const Histogram& hist, const std::vector<double>& tmpl,
                                 double threshold = kDefaultPearsonThreshold) {
  const auto n = static_cast<std::int64_t>(hist.counts.size());
  if (n == 0 || static_cast<std::int64_t>(tmpl.size()) != n)
    throw ConfigError("recover_offset: histogram and template sizes differ");
  if (hist.total < 1) throw NoLockError("recover_offset: no counts");
  const double nn = static_cast<double>(n);
  double h_sum = 0.0;
  double h_sq = 0.0;
  for (auto c : hist.counts) {
    h_sum += static_cast<double>(c);
    h_sq += static_cast<double>(c) * static_cast<double>(c);
  }
  double t_sum = 0.0;
  double t_sq = 0.0;
  double t_max = 0.0;
  for (double v : tmpl) {
    t_sum += v;
    t_sq += v * v;
    t_max = std::max(t_max, v);
  }
  const double h_var = h_sq - h_sum * h_sum / nn;
  const double t_var = t_sq - t_sum * t_sum / nn;
  if (!(h_var > 0.0) || !(t_var > 0.0)) throw NoLockError("recover_offset: constant histogram or template");
  std::vector<std::pair<std::int64_t, double>> support;
  for (std::int64_t i = 0; i < n; ++i)
    if (tmpl[static_cast<std::size_t>(i)] > 1e-9 * t_max) support.emplace_back(i, tmpl[static_cast<std::size_t>(i)]);
  OffsetLock best;
  best.correlation = -2.0;
  for (std::int64_t k = 0; k < n; ++k) {
    double cross = 0.0;
    for (const auto& [i, v] : support) {
      std::int64_t j = i + k;
      if (j >= n) j -= n;
      cross += static_cast<double>(hist.counts[static_cast<std::size_t>(j)]) * v;
    }
    const double r = (cross - h_sum * t_sum / nn) / std::sqrt(h_var * t_var);
    if (r > best.correlation) {
      best.correlation = r;
      best.shift_bins = k;
    }
  }
  if (best.shift_bins > n / 2) best.shift_bins -= n;
  best.shift = static_cast<double>(best.shift_bins) * hist.bin_width;
  if (best.correlation < threshold)
    throw NoLockError("recover_offset: peak correlation " + std::to_string(best.correlation) + " below " +
                      std::to_string(threshold));
  return best;
}

struct PracticalLimit {
  double t_int = 0.0;
  double raw = 0.0;        // T_bin / (2 T_int)
  double practical = 0.0;  // safety * raw
};

inline PracticalLimit practical_drift_limit(double photons_per_hist, double cps_eff_alice, double t_bin,
                                            double safety = 0.7) {
  detail::require(photons_per_hist >= 1.0, "photons per histogram must be at least 1");
  detail::require(cps_eff_alice > 0.0, "effective rate must be positive");
  PracticalLimit p;
  p.t_int = photons_per_hist / cps_eff_alice;
  p.raw = t_bin / (2.0 * p.t_int);
  p.practical = safety * p.raw;
  return p;
}

inline PracticalLimit practical_drift_limit(double n_bar_align, double photons_per_hist, const SpadModel& spad,
                                            double f_alice, double eta_ch, double t_bin, double safety = 0.7) {
  const EffectiveRates r = effective_rates(spad, f_alice, n_bar_align, eta_ch);
  return practical_drift_limit(photons_per_hist, r.cps_eff_alice, t_bin, safety);
}

// ---------------------------------------------------------------------------
// Closed loop

struct Acquisition {
  Histogram hist;                    // folded over the slot period
  std::optional<Histogram> pattern;  // folded over the qubit pattern period
  QberResult qber;
  double t_start = 0.0;
  double t_end = 0.0;
};

template <class P>
concept AcquisitionSource = requires(P p, double t, bool b, std::int64_t steps) {
  { p.acquire(t, t, b) } -> std::same_as<Acquisition>;
  { p.apply_frequency_update(t) };
  { p.add_delay_steps(steps) };
  { p.delay_resolution() } -> std::convertible_to<double>;
  { p.bin_width() } -> std::convertible_to<double>;
};

enum class SyncPhase { ramping, offset_recovery, tracking };

inline const char* to_string(SyncPhase p) {
  switch (p) {
    case SyncPhase::ramping: return "ramping";
    case SyncPhase::offset_recovery: return "offset_recovery";
    case SyncPhase::tracking: return "tracking";
  }
  return "?";
}

struct SyncConfig {
  double t_bin = 1.0 * units::ns;
  double t_int_start = 155.0 * units::us;
  double t_int_max = 500.0 * units::ms;
  double growth = 4.0;
  int iters_per_stage = 3;
  double n_bar_ramp = 10.0;
  double n_bar_nominal = 0.225;
  double modulus_floor = kDefaultModulusFloor;
  double pearson_threshold = kDefaultPearsonThreshold;
  double guard_fraction = 0.9;
  double phi_q = 0.0;
  bool offset_recovery = true;
  bool start_tracking = false;  // skip the ramp, start at t_int_max
  std::int64_t tracking_iterations = 1;
  std::vector<std::uint8_t> pattern;
  std::optional<ArrivalPdf> template_lobe;  // unfolded early lobe for the Pearson template

  double mu_e() const { return 0.5 * t_bin; }

  void validate() const {
    detail::require(t_bin > 0.0, "t_bin must be positive");
    detail::require(t_int_start > 0.0 && t_int_max >= t_int_start, "need 0 < t_int_start <= t_int_max");
    detail::require(growth > 1.0, "growth must exceed 1");
    detail::require(iters_per_stage >= 1, "iterations per stage must be positive");
    detail::require(n_bar_ramp >= 0.0 && n_bar_nominal >= 0.0, "mean photon numbers must be nonnegative");
    detail::require(guard_fraction > 0.0 && guard_fraction <= 1.0, "guard fraction must be in (0, 1]");
    detail::require(tracking_iterations >= 0, "tracking iterations must be nonnegative");
    if (offset_recovery && !start_tracking) {
      detail::require(!pattern.empty(), "offset recovery needs a qubit pattern");
      detail::require(template_lobe.has_value(), "offset recovery needs a template lobe");
    }
  }
};

struct TraceRow {
  std::int64_t iter = 0;
  double t_cumulative = 0.0;  // acquisition time before this iteration
  double t_int = 0.0;
  double n_bar = 0.0;
  double drift_est = 0.0;
  double delay_applied = 0.0;
  double mean_center = 0.0;
  double qber = 0.0;
  double qber_filtered = 0.0;
  SyncPhase phase = SyncPhase::ramping;
  bool rolled_back = false;
  std::int64_t counts = 0;
};

struct SyncState {
  SyncPhase phase = SyncPhase::ramping;
  double t_int_current = 0.0;
  double n_bar_current = 0.0;
  std::int64_t iteration = 0;
  std::optional<CircularMean> last_mean;
  double phi_q = 0.0;
  double delay_residue = 0.0;
  double t_cumulative = 0.0;
  std::optional<OffsetLock> lock;
  std::vector<TraceRow> history;
};

/// Runs ramp, offset recovery and `tracking_iterations` tracking iterations.
template <AcquisitionSource Plant>
SyncState run_ramp_controller(Plant& plant, const SyncConfig& cfg) {
  cfg.validate();
  SyncState st;
  st.phi_q = cfg.phi_q;
  std::int64_t stage = 0;
  std::int64_t in_stage = 0;
  st.t_int_current = cfg.start_tracking ? cfg.t_int_max : cfg.t_int_start;
  st.phase = cfg.start_tracking ? SyncPhase::tracking : SyncPhase::ramping;
  std::int64_t tracked = 0;
  std::vector<double> tmpl;
  if (cfg.offset_recovery && !cfg.start_tracking)
    tmpl = pattern_template(cfg.pattern, *cfg.template_lobe, cfg.t_bin, plant.bin_width());
  const double delay_res = plant.delay_resolution();

  while (st.phase != SyncPhase::tracking || tracked < cfg.tracking_iterations) {
    const double t_int = st.t_int_current;
    const bool at_max = t_int >= cfg.t_int_max * (1.0 - 1e-12);
    const bool last_before_max = !at_max && in_stage == cfg.iters_per_stage - 1 &&
                                 std::min(t_int * cfg.growth, cfg.t_int_max) >= cfg.t_int_max * (1.0 - 1e-12);
    if (st.phase == SyncPhase::ramping && cfg.offset_recovery && last_before_max) st.phase = SyncPhase::offset_recovery;
    if (st.phase == SyncPhase::ramping && !cfg.offset_recovery && at_max) st.phase = SyncPhase::tracking;
    st.n_bar_current = at_max ? cfg.n_bar_nominal : cfg.n_bar_ramp;
    const bool want_pattern = st.phase == SyncPhase::offset_recovery;

    TraceRow row;
    row.iter = st.iteration;
    row.t_cumulative = st.t_cumulative;
    row.t_int = t_int;
    row.n_bar = st.n_bar_current;
    row.phase = st.phase;

    Acquisition a1 = plant.acquire(t_int, st.n_bar_current, want_pattern);
    Acquisition a2 = plant.acquire(t_int, st.n_bar_current, want_pattern);
    st.t_cumulative += 2.0 * t_int;
    row.counts = a1.hist.total + a2.hist.total;
    {
      const std::int64_t n = a1.qber.n_unfiltered + a2.qber.n_unfiltered;
      const std::int64_t nf = a1.qber.n_filtered + a2.qber.n_filtered;
      row.qber = n > 0 ? static_cast<double>(a1.qber.errors_unfiltered + a2.qber.errors_unfiltered) / static_cast<double>(n) : 0.0;
      row.qber_filtered = nf > 0 ? static_cast<double>(a1.qber.errors_filtered + a2.qber.errors_filtered) / static_cast<double>(nf) : 0.0;
    }

    const CircularMean m1 = circular_mean(a1.hist, cfg.t_bin);
    const CircularMean m2 = circular_mean(a2.hist, cfg.t_bin);
    const double drift = estimate_drift(m1, m2, t_int, cfg.t_bin, cfg.modulus_floor);
    row.drift_est = drift;
    row.mean_center = circular_center(m1, cfg.t_bin, st.phi_q);
    st.last_mean = m2;

    const bool past_first_stage = stage > 0 || cfg.start_tracking;
    if (past_first_stage && std::abs(drift) * t_int > cfg.guard_fraction * 0.5 * cfg.t_bin &&
        st.phase != SyncPhase::tracking) {
      // Estimate near the alias boundary: shorten the acquisition, no update.
      row.rolled_back = true;
      st.history.push_back(row);
      ++st.iteration;
      st.t_int_current = std::max(cfg.t_int_start, 0.5 * t_int);
      if (st.phase == SyncPhase::offset_recovery) st.phase = SyncPhase::ramping;
      in_stage = 0;
      continue;
    }

    double eps = estimate_delay(m1, drift, t_int, cfg.t_bin, cfg.mu_e(), st.phi_q);
    if (st.phase == SyncPhase::offset_recovery) {
      Histogram ph = *a1.pattern;
      for (std::size_t i = 0; i < ph.counts.size(); ++i) ph.add(i, a2.pattern->counts[i]);
      const OffsetLock lock = recover_offset(ph, tmpl, cfg.pearson_threshold);
      // Pattern histogram is centered at the middle of both acquisitions; the
      // delay update refers to their end.
      const double m = std::round((lock.shift + eps + drift * t_int) / cfg.t_bin);
      eps -= m * cfg.t_bin;
      st.lock = lock;
    }

    plant.apply_frequency_update(drift);
    const double wanted = eps + st.delay_residue;
    const auto steps = static_cast<std::int64_t>(std::llround(wanted / delay_res));
    st.delay_residue = wanted - static_cast<double>(steps) * delay_res;
    plant.add_delay_steps(steps);
    row.delay_applied = static_cast<double>(steps) * delay_res;
    st.history.push_back(row);
    ++st.iteration;

    if (st.phase == SyncPhase::tracking) {
      ++tracked;
      continue;
    }
    if (st.phase == SyncPhase::offset_recovery) {
      st.phase = SyncPhase::tracking;
      st.t_int_current = cfg.t_int_max;
      continue;
    }
    if (++in_stage >= cfg.iters_per_stage) {
      in_stage = 0;
      ++stage;
      st.t_int_current = std::min(t_int * cfg.growth, cfg.t_int_max);
    }
  }
  return st;
}

/// Cumulative acquisition time at the start of the first tracking iteration
/// whose QBER is at most factor * baseline, or nullopt.
inline std::optional<double> time_to_tracking(const SyncState& st, double baseline_qber, double factor = 2.0) {
  for (const TraceRow& r : st.history)
    if (r.phase == SyncPhase::tracking && r.qber <= factor * baseline_qber) return r.t_cumulative;
  return std::nullopt;
}

}  // namespace qkdsync
