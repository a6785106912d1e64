#pragma once

// Subcommand bodies. Each returns its tables as text so the CLI, the tests
// and the determinism check share one code path.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "clock.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "mc_sim.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "pdf_engine.hpp"
#include "physics.hpp"
#include "plant.hpp"
#include "rng.hpp"
#include "sync.hpp"
#include "trajectory.hpp"

namespace qkdsync {

inline constexpr double kYear = 365.25 * 86400.0;
inline constexpr std::int64_t kSettleIterations = 5;  // tracking rows skipped in summaries

// ---------------------------------------------------------------------------
// Config -> model objects

inline OpticalLink link_from(const RunConfig& c) {
  OpticalLink l;
  l.wavelength = c.get("wavelength");
  l.pulse_fwhm = c.get("pulse_fwhm");
  l.chirp = c.get("chirp");
  l.dispersion_coeff = c.get("dispersion");
  l.fiber_length = c.get("fiber_length");
  l.attenuation_db_per_km = c.get("attenuation");
  l.extra_loss_db = c.get("extra_loss");
  if (c.raw("loss") != "fiber") {
    // Total loss given directly; length still sets dispersion.
    l.attenuation_db_per_km = 0.0;
    l.extra_loss_db = c.get("loss");
  }
  l.validate();
  return l;
}

inline SpadModel spad_from(const RunConfig& c) {
  SpadModel s;
  s.skew_shape = c.get("skew_shape");
  s.skew_scale = c.get("skew_scale");
  s.efficiency = c.get("efficiency");
  s.dead_time = c.get("dead_time");
  s.dark_count_rate = c.get("dark_count_rate");
  s.validate();
  return s;
}

inline TdcModel tdc_from(const RunConfig& c) {
  TdcModel t;
  t.bin_width = c.get("tdc_bin");
  t.delay_resolution = c.get("delay_resolution");
  t.period = 2.0 * c.get("t_bin");
  t.validate();
  return t;
}

inline OscillatorNoise noise_from(const RunConfig& c) {
  OscillatorNoise n;
  n.white_fm = c.get("white_fm");
  n.random_walk_fm = c.get("random_walk_fm");
  n.path_jitter = c.get("path_jitter");
  n.path_tau = c.get("path_tau");
  detail::require(n.white_fm >= 0.0 && n.random_walk_fm >= 0.0 && n.path_jitter >= 0.0,
                  "noise amplitudes must be nonnegative");
  return n;
}

inline SimScenario scenario_from(const RunConfig& c) {
  SimScenario sc;
  sc.rng_seed = c.seed();
  sc.t_bin = c.get("t_bin");
  sc.link = link_from(c);
  sc.spad = spad_from(c);
  sc.tdc = tdc_from(c);
  sc.noise = noise_from(c);
  sc.mean_photon = c.get("mean_photon");
  sc.intrinsic_error = c.get("intrinsic_error");
  sc.linear_detection = c.get_int("linear_detection") != 0;
  const auto slots = c.get_int("pattern_slots");
  detail::require(slots >= 2, "pattern_slots must be at least 2");
  sc.qubit_pattern = make_pattern(static_cast<std::size_t>(slots), sc.rng_seed);
  double offset = c.get("static_offset");
  if (c.get_int("random_offset") != 0) {
    Rng r = make_rng(sc.rng_seed, stream::offset);
    const double span = static_cast<double>(slots) * 2.0 * sc.t_bin;
    offset += std::uniform_real_distribution<double>(0.0, span)(r);
  }
  sc.clocks = ClockPair::with_drift(c.get("f_alice"), c.get("initial_drift"), offset, c.get("aging"));
  sc.validate();
  return sc;
}

inline QberParams qber_params_from(const RunConfig& c, const OpticalLink& link) {
  QberParams p;
  p.sigma = pulse_sigma_at_distance(link);
  p.spad = spad_from(c);
  p.t_bin = c.get("t_bin");
  p.window = c.get("window");
  p.step = c.get("grid_step");
  detail::require(p.step > 0.0, "grid_step must be positive");
  p.validate();
  return p;
}

inline SyncConfig sync_config_from(const RunConfig& c, const SimScenario& sc) {
  SyncConfig cfg;
  cfg.t_bin = sc.t_bin;
  cfg.t_int_start = c.get("t_int_start");
  cfg.t_int_max = c.get("t_int_max");
  cfg.growth = c.get("growth");
  cfg.iters_per_stage = static_cast<int>(c.get_int("iters_per_stage"));
  cfg.n_bar_ramp = c.get("n_bar_ramp");
  cfg.n_bar_nominal = sc.mean_photon;
  cfg.modulus_floor = c.get("modulus_floor");
  cfg.pearson_threshold = c.get("pearson_threshold");
  cfg.guard_fraction = c.get("guard_fraction");
  cfg.phi_q = spad_phase_bias(sc.spad, sc.t_bin);
  cfg.tracking_iterations = c.get_int("tracking_iterations");
  cfg.pattern = sc.qubit_pattern;
  cfg.template_lobe = convolve_spad(
      drift_pdf_grid(pulse_sigma_at_distance(sc.link), 0.0, 0.0, 0.5 * sc.t_bin, c.get("grid_step")), sc.spad);
  cfg.validate();
  return cfg;
}

/// Slows a plant down to wall-clock pace for demos.
template <AcquisitionSource Plant>
class RealtimePlant {
 public:
  explicit RealtimePlant(Plant& inner) : inner_(inner) {}

  Acquisition acquire(double t_int, double n_bar, bool want_pattern) {
    Acquisition a = inner_.acquire(t_int, n_bar, want_pattern);
    std::this_thread::sleep_for(std::chrono::duration<double>(t_int));
    return a;
  }
  void apply_frequency_update(double e) { inner_.apply_frequency_update(e); }
  void add_delay_steps(std::int64_t s) { inner_.add_delay_steps(s); }
  double delay_resolution() const { return inner_.delay_resolution(); }
  double bin_width() const { return inner_.bin_width(); }

 private:
  Plant& inner_;
};

// ---------------------------------------------------------------------------
// Shared table helpers

inline CsvTable trace_table(const RunConfig& c, const std::string& command, const SyncState& st) {
  CsvTable t(metadata_header(c, command),
             {"iter", "t_cumulative_s", "t_int_s", "n_bar", "drift_est_per_s", "delay_applied_ps", "mean_center_ps",
              "qber", "qber_filtered"});
  for (const TraceRow& r : st.history)
    t.row({std::to_string(r.iter), num(r.t_cumulative), num(r.t_int), num(r.n_bar), num(r.drift_est),
           num(r.delay_applied / units::ps), num(r.mean_center / units::ps), num(r.qber), num(r.qber_filtered)});
  return t;
}

struct TrackingStats {
  SeriesSummary center;  // s
  SeriesSummary drift;   // 1/s
  double qber_mean = std::numeric_limits<double>::quiet_NaN();
  double qber_filtered_mean = std::numeric_limits<double>::quiet_NaN();
  std::size_t rows = 0;
};

/// Statistics over tracking rows after the first kSettleIterations.
inline TrackingStats tracking_stats(const SyncState& st, std::int64_t settle = kSettleIterations) {
  std::vector<double> center, drift, q, qf;
  std::int64_t seen = 0;
  for (const TraceRow& r : st.history) {
    if (r.phase != SyncPhase::tracking) continue;
    if (seen++ < settle) continue;
    center.push_back(r.mean_center);
    drift.push_back(r.drift_est);
    q.push_back(r.qber);
    qf.push_back(r.qber_filtered);
  }
  TrackingStats s;
  s.rows = center.size();
  if (center.empty()) return s;
  s.center = summarize(center);
  s.drift = summarize(drift);
  s.qber_mean = summarize(q).mean;
  s.qber_filtered_mean = summarize(qf).mean;
  return s;
}

inline double std_or_nan(const SeriesSummary& s) {
  return s.std_defined && s.count > 0 ? s.std : std::numeric_limits<double>::quiet_NaN();
}

inline double mean_or_nan(const SeriesSummary& s) {
  return s.count > 0 ? s.mean : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Subcommands

/// QBER against drift product for each filtering window.
inline Outputs cmd_qber_curve(const RunConfig& c) {
  const OpticalLink link = link_from(c);
  const QberParams base = qber_params_from(c, link);
  const std::vector<double> windows = c.get_list("windows");
  const double step = c.get("dt_step");
  detail::require(step > 0.0 && step <= base.t_bin, "dt_step must be in (0, t_bin]");
  for (double w : windows) detail::require(w > 0.0 && w <= base.t_bin, "windows must be in (0, t_bin]");
  const auto n_dt = static_cast<std::size_t>(std::floor(base.t_bin / step + 1e-9)) + 1;

  struct Point {
    double w, dt;
  };
  std::vector<Point> pts;
  for (double w : windows)
    for (std::size_t i = 0; i < n_dt; ++i) pts.push_back({w, static_cast<double>(i) * step});
  const auto q = parallel_map<double>(pts.size(), [&](std::size_t i) {
    QberParams p = base;
    p.window = pts[i].w;
    p.drift_product = pts[i].dt;
    return drift_qber(p);
  });

  CsvTable t(metadata_header(c, "qber-curve"), {"dt_drift_ps", "w_ps", "z_km", "qber"});
  for (std::size_t i = 0; i < pts.size(); ++i)
    t.row({num(pts[i].dt / units::ps), num(pts[i].w / units::ps), num(link.fiber_length / units::km), num(q[i])});
  return {{"qber_curve.csv", t.str()}};
}

/// Largest drift product keeping QBER at or below error_threshold, per
/// (z, w). Unreachable thresholds give NA.
inline Outputs cmd_drift_limit(const RunConfig& c) {
  const std::vector<double> zs = c.get_list("z_list");
  const std::vector<double> windows = c.get_list("windows");
  const double thr = c.get("error_threshold");
  const OpticalLink link0 = link_from(c);
  const QberParams base = qber_params_from(c, link0);
  for (double w : windows) detail::require(w > 0.0 && w <= base.t_bin, "windows must be in (0, t_bin]");
  struct Point {
    double z, w;
  };
  std::vector<Point> pts;
  for (double z : zs)
    for (double w : windows) pts.push_back({z, w});
  const auto lim = parallel_map<double>(pts.size(), [&](std::size_t i) {
    OpticalLink l = link0;
    l.fiber_length = pts[i].z;
    l.validate();
    QberParams p = base;
    p.sigma = pulse_sigma_at_distance(l);
    p.window = pts[i].w;
    try {
      return invert_drift_for_threshold(thr, p);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  });
  CsvTable t(metadata_header(c, "drift-limit"), {"z_km", "w_ps", "max_dt_drift_ps"});
  for (std::size_t i = 0; i < pts.size(); ++i)
    t.row({num(pts[i].z / units::km), num(pts[i].w / units::ps), num(lim[i] / units::ps)});
  return {{"drift_limit.csv", t.str()}};
}

struct SyncRunOptions {
  bool realtime = false;
  bool dump_events = false;
};

/// Closed loop on the event simulator: ramp, offset recovery, tracking.
inline Outputs cmd_sync_run(const RunConfig& c, const SyncRunOptions& opt = {}) {
  const SimScenario sc = scenario_from(c);
  const SyncConfig cfg = sync_config_from(c, sc);
  const double window = c.get("window");
  EventPlant plant(sc, window);
  SyncState st;
  if (opt.realtime) {
    RealtimePlant<EventPlant> rt(plant);
    st = run_ramp_controller(rt, cfg);
  } else {
    st = run_ramp_controller(plant, cfg);
  }

  const double baseline = baseline_qber(sc, sc.mean_photon, sc.t_bin);
  const std::optional<double> ttt = time_to_tracking(st, baseline);
  const TrackingStats ts = tracking_stats(st);
  std::int64_t rollbacks = 0;
  for (const TraceRow& r : st.history) rollbacks += r.rolled_back ? 1 : 0;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  Summary s(metadata_header(c, "sync-run"));
  s.put("loss_db", sc.link.total_loss_db());
  s.put("fiber_length_km", sc.link.fiber_length / units::km);
  s.put("initial_drift_per_s", sc.clocks.drift());
  s.put("static_offset_ps", sc.clocks.static_offset / units::ps);
  s.put("iterations", static_cast<double>(st.history.size()));
  s.put("rollbacks", static_cast<double>(rollbacks));
  s.put("lock_shift_ps", st.lock ? st.lock->shift / units::ps : nan);
  s.put("lock_correlation", st.lock ? st.lock->correlation : nan);
  s.put("baseline_qber", baseline);
  s.put("time_to_tracking_s", ttt ? *ttt : nan);
  s.put("tracking_rows", static_cast<double>(ts.rows));
  s.put("tracking_center_mean_ps", mean_or_nan(ts.center) / units::ps);
  s.put("tracking_center_std_ps", std_or_nan(ts.center) / units::ps);
  s.put("tracking_drift_mean_ps_per_s", mean_or_nan(ts.drift) / units::ps);
  s.put("tracking_drift_std_ps_per_s", std_or_nan(ts.drift) / units::ps);
  s.put("tracking_qber_mean", ts.qber_mean);
  s.put("tracking_qber_filtered_mean", ts.qber_filtered_mean);

  Outputs out{{"sync_trace.csv", trace_table(c, "sync-run", st).str()}, {"sync_summary.txt", s.str()}};
  if (opt.dump_events) {
    CsvTable ev(metadata_header(c, "sync-run"), {"t_ps", "label"});
    for (const Event& e : plant.last_events()) {
      static const char* names[] = {"early", "late", "dark"};
      ev.row({num(e.time(sc.slot_period()) / units::ps), names[static_cast<int>(e.label)]});
    }
    out.push_back({"events.csv", ev.str()});
  }
  return out;
}

/// Relative drift-estimation error over (t_drift, T_int), from expected-count
/// histograms (noisy=0) and Poisson-sampled ones (noisy=1).
inline Outputs cmd_error_map(const RunConfig& c) {
  const OpticalLink link = link_from(c);
  const SpadModel spad = spad_from(c);
  const TdcModel tdc = tdc_from(c);
  const double t_bin = c.get("t_bin");
  const double step = c.get("grid_step");
  const double floor = c.get("modulus_floor");
  const double sigma = pulse_sigma_at_distance(link);
  const std::vector<double> drifts = c.get_list("drift_list");
  const std::vector<double> t_ints = c.get_list("t_int_list");
  for (double t : t_ints) detail::require(t > 0.0, "t_int_list entries must be positive");
  const EffectiveRates rates =
      effective_rates(spad, c.get("f_alice"), c.get("noisy_mean_photon"), channel_transmittance(link));
  const std::uint64_t seed = c.seed();

  struct Cell {
    double drift, t_int;
    int noisy;
  };
  std::vector<Cell> cells;
  for (double d : drifts)
    for (double t : t_ints)
      for (int noisy = 0; noisy <= 1; ++noisy) cells.push_back({d, t, noisy});

  const auto err = parallel_map<double>(cells.size(), [&](std::size_t i) {
    const Cell& cell = cells[i];
    const double shift = cell.drift * cell.t_int;
    // Consecutive acquisitions: the second starts where the first ends.
    const ArrivalPdf h1 = fold(convolve_spad(drift_pdf_grid(sigma, shift, 0.0, 0.5 * t_bin, step), spad), 2.0 * t_bin);
    const ArrivalPdf h2 =
        fold(convolve_spad(drift_pdf_grid(sigma, shift, shift, 0.5 * t_bin, step), spad), 2.0 * t_bin);
    try {
      CircularMean m1, m2;
      if (cell.noisy) {
        Rng rng = make_rng(derive_seed(seed, 1000 + i), stream::poisson);
        m1 = circular_mean(poisson_histogram(h1, rates, cell.t_int, tdc, rng), t_bin);
        m2 = circular_mean(poisson_histogram(h2, rates, cell.t_int, tdc, rng), t_bin);
      } else {
        m1 = circular_mean(expected_counts(h1, rates, cell.t_int, tdc), tdc.bin_width, t_bin);
        m2 = circular_mean(expected_counts(h2, rates, cell.t_int, tdc), tdc.bin_width, t_bin);
      }
      const double est = estimate_drift(m1, m2, cell.t_int, t_bin, floor);
      return 100.0 * (est - cell.drift) / cell.drift;
    } catch (const FlatHistogramError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  });

  CsvTable t(metadata_header(c, "error-map"), {"t_drift_per_s", "t_int_s", "noisy", "rel_error_pct"});
  for (std::size_t i = 0; i < cells.size(); ++i)
    t.row({num(cells[i].drift), num(cells[i].t_int), std::to_string(cells[i].noisy), num(err[i])});
  return {{"error_map.csv", t.str()}};
}

/// Clock constraints for the configured hardware.
inline Outputs cmd_constraints(const RunConfig& c) {
  const OpticalLink link = link_from(c);
  const SpadModel spad = spad_from(c);
  const double t_bin = c.get("t_bin");
  const double safety = c.get("safety");
  detail::require(safety > 0.0 && safety <= 1.0, "safety must be in (0, 1]");

  const double max_drift = max_unambiguous_drift(t_bin, spad.dead_time);
  const PracticalLimit from_rates = practical_drift_limit(c.get("n_bar_ramp"), c.get("photons_per_hist"), spad,
                                                          c.get("f_alice"), channel_transmittance(link), t_bin, safety);
  const double t_int_start = c.get("t_int_start");
  const double raw_start = t_bin / (2.0 * t_int_start);
  const double practical_start = safety * raw_start;

  const double aging = opposing_clocks_aging(c.get("calibration_drift"), c.get("calibration_span"));
  const double tc_theory = max_calibration_interval(aging, max_drift);
  const double tc_practical = max_calibration_interval(aging, practical_start);

  TimingBudget budget;
  budget.t_bin = t_bin;
  budget.t_int = c.get("stability_t_int");
  budget.window_width = c.get("window");
  budget.error_threshold = c.get("error_threshold");
  budget.validate();
  const double bound = short_term_stability_bound(budget, c.get("stability_shift"));

  QberParams p = qber_params_from(c, link);
  p.window = t_bin;
  double shift_computed = std::numeric_limits<double>::quiet_NaN();
  try {
    shift_computed = invert_drift_for_threshold(budget.error_threshold, p);
  } catch (const NumericalError&) {
  }
  const double bound_computed = short_term_stability_bound(budget, shift_computed);
  const double xo = 2.0 * c.get("xo_aging");

  Summary s(metadata_header(c, "constraints"));
  s.put("max_drift_us_per_s", max_drift / 1e-6);
  s.put("align_t_int_us", from_rates.t_int / units::us);
  s.put("align_raw_limit_us_per_s", from_rates.raw / 1e-6);
  s.put("align_practical_limit_us_per_s", from_rates.practical / 1e-6);
  s.put("t_int_start_us", t_int_start / units::us);
  s.put("raw_limit_us_per_s", raw_start / 1e-6);
  s.put("practical_limit_us_per_s", practical_start / 1e-6);
  s.put("aging_opposing_clocks_ps_per_s2", aging / 1e-12);
  s.put("calibration_interval_theoretical_years", tc_theory / kYear);
  s.put("calibration_interval_practical_years", tc_practical / kYear);
  s.put("stability_shift_ps", c.get("stability_shift") / units::ps);
  s.put("short_term_bound_ps_per_s2", bound / 1e-12);
  s.put("computed_shift_ps", shift_computed / units::ps);
  s.put("computed_short_term_bound_ps_per_s2", bound_computed / 1e-12);
  s.put("xo_aging_doubled_ps_per_s2", xo / 1e-12);
  s.put("xo_within_short_term_bound", xo <= bound ? "yes" : "no");
  return {{"constraints.txt", s.str()}};
}

/// Day-scale tracking on the per-bin Poisson sampler for the field link.
inline Outputs cmd_field_sim(const RunConfig& c) {
  RunConfig fc = c;
  fc.set("fiber_length", c.raw("field_length"));
  fc.set("loss", c.raw("field_loss"));
  fc.set("intrinsic_error", c.raw("field_intrinsic_error"));
  fc.set("initial_drift", "0 ps/s");
  fc.set("random_offset", "0");
  fc.set("static_offset", "0 ps");
  SimScenario sc = scenario_from(fc);

  const double duration = c.get("duration");
  const double t_int = c.get("t_int_max");
  detail::require(duration >= 4.0 * t_int, "duration must cover a few iterations");
  SyncConfig cfg = sync_config_from(fc, sc);
  cfg.start_tracking = true;
  cfg.offset_recovery = false;
  cfg.tracking_iterations = static_cast<std::int64_t>(std::floor(duration / (2.0 * t_int)));
  PoissonPlant plant(sc, c.get("window"), c.get("grid_step"));
  const SyncState st = run_ramp_controller(plant, cfg);

  TimeSeries center{{}, {}, SeriesKind::center};
  TimeSeries drift{{}, {}, SeriesKind::drift};
  TimeSeries q{{}, {}, SeriesKind::qber};
  TimeSeries qf{{}, {}, SeriesKind::qber_filtered};
  for (const TraceRow& r : st.history) {
    const double t = r.t_cumulative + 2.0 * r.t_int;
    for (TimeSeries* s : {&center, &drift, &q, &qf}) s->timestamps.push_back(t);
    center.values.push_back(r.mean_center / units::ps);
    drift.values.push_back(r.drift_est / units::ps);
    q.values.push_back(r.qber);
    qf.values.push_back(r.qber_filtered);
  }
  const double smoothing = c.get("field_smoothing");
  const TimeSeries q_avg = moving_average(q, smoothing);
  const TimeSeries qf_avg = moving_average(qf, smoothing);

  std::vector<double> taus = octave_taus(2.0 * t_int, center.values.size());
  const double max_tau = c.get("tdev_max_tau");
  while (!taus.empty() && taus.back() > max_tau * (1.0 + 1e-9)) taus.pop_back();
  const std::vector<TdevPoint> td = tdev(center, taus);

  CsvTable series(metadata_header(c, "field-sim"),
                  {"t_s", "center_ps", "drift_ps_per_s", "qber", "qber_filtered", "qber_avg", "qber_filtered_avg"});
  for (std::size_t i = 0; i < center.values.size(); ++i)
    series.row({num(center.timestamps[i]), num(center.values[i]), num(drift.values[i]), num(q.values[i]),
                num(qf.values[i]), num(q_avg.values[i]), num(qf_avg.values[i])});
  CsvTable tdev_csv(metadata_header(c, "field-sim"), {"tau_s", "tdev_ps"});
  double tdev_peak = 0.0;
  for (const TdevPoint& p : td) {
    tdev_csv.row({num(p.tau), num(p.tdev)});
    tdev_peak = std::max(tdev_peak, p.tdev);
  }

  const SeriesSummary cs = summarize(center);
  const SeriesSummary ds = summarize(drift);
  Summary s(metadata_header(c, "field-sim"));
  s.put("loss_db", sc.link.total_loss_db());
  s.put("fiber_length_km", sc.link.fiber_length / units::km);
  s.put("duration_s", duration);
  s.put("iterations", static_cast<double>(st.history.size()));
  s.put("center_mean_ps", cs.mean);
  s.put("center_std_ps", std_or_nan(cs));
  s.put("drift_mean_ps_per_s", ds.mean);
  s.put("drift_std_ps_per_s", std_or_nan(ds));
  s.put("qber_mean", summarize(q).mean);
  s.put("qber_filtered_mean", summarize(qf).mean);
  s.put("baseline_qber", baseline_qber(sc, sc.mean_photon, sc.t_bin));
  s.put("baseline_qber_filtered", baseline_qber(sc, sc.mean_photon, c.get("window")));
  s.put("tdev_tau0_ps", td.empty() ? std::numeric_limits<double>::quiet_NaN() : td.front().tdev);
  s.put("tdev_peak_ps", tdev_peak);
  s.put("lobe_cache_entries", static_cast<double>(plant.cached_lobes()));

  return {{"field_trace.csv", trace_table(c, "field-sim", st).str()},
          {"field_series.csv", series.str()},
          {"field_tdev.csv", tdev_csv.str()},
          {"field_summary.txt", s.str()}};
}

}  // namespace qkdsync
