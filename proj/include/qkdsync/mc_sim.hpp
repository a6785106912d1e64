#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "clock.hpp"
#include "errors.hpp"
#include "numeric.hpp"
#include "pdf_engine.hpp"
#include "physics.hpp"
#include "rng.hpp"
#include "trajectory.hpp"
#include "units.hpp"

namespace qkdsync {

struct TdcModel {
  double bin_width = 100.0 * units::ps;
  double delay_resolution = 11.0 * units::ps;
  double period = 2.0 * units::ns;
  std::int64_t delay_steps = 0;

  double delay_register() const { return static_cast<double>(delay_steps) * delay_resolution; }

  std::size_t bins(double fold_period) const {
    std::int64_t n = 0;
    if (!numeric::is_integer_ratio(fold_period, bin_width, &n))
      throw ConfigError("fold period must be an integer multiple of the TDC bin width");
    return static_cast<std::size_t>(n);
  }

  void validate() const {
    detail::require(bin_width > 0.0, "TDC bin width must be positive");
    detail::require(delay_resolution > 0.0, "TDC delay resolution must be positive");
    bins(period);
  }
};

struct Histogram {
  std::vector<std::int64_t> counts;
  double bin_width = 100.0 * units::ps;
  double acq_start = 0.0;
  double acq_duration = 0.0;
  std::int64_t total = 0;

  double period() const { return bin_width * static_cast<double>(counts.size()); }
  double bin_center(std::size_t k) const { return (static_cast<double>(k) + 0.5) * bin_width; }

  void add(std::size_t k, std::int64_t c = 1) {
    counts[k] += c;
    total += c;
  }

  /// Sums the bins of a histogram over a multiple of `period` onto `period`.
  Histogram refold(double period) const {
    std::int64_t n = 0;
    if (!numeric::is_integer_ratio(period, bin_width, &n) || counts.size() % static_cast<std::size_t>(n) != 0)
      throw ConfigError("refold: period must divide the histogram period in whole bins");
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(n), 0);
    h.bin_width = bin_width;
    h.acq_start = acq_start;
    h.acq_duration = acq_duration;
    for (std::size_t k = 0; k < counts.size(); ++k) h.add(k % static_cast<std::size_t>(n), counts[k]);
    return h;
  }
};

inline Histogram empty_histogram(std::size_t bins, double bin_width, double acq_start, double acq_duration) {
  Histogram h;
  h.counts.assign(bins, 0);
  h.bin_width = bin_width;
  h.acq_start = acq_start;
  h.acq_duration = acq_duration;
  return h;
}

/// Alice's early/late choice per pulse: a repeating pattern, or a fair coin
/// derived from the seed and pulse index.
struct QubitSource {
  std::vector<std::uint8_t> pattern;
  std::uint64_t key = 0;

  int bit(std::int64_t slot) const {
    if (!pattern.empty())
      return pattern[static_cast<std::size_t>(numeric::wrap_index(slot, static_cast<std::int64_t>(pattern.size())))];
    return hash_uniform(key, static_cast<std::uint64_t>(slot)) < 0.5 ? 0 : 1;
  }
};

/// Pseudo-random early/late pattern of `slots` entries.
inline std::vector<std::uint8_t> make_pattern(std::size_t slots, std::uint64_t seed) {
  Rng rng = make_rng(seed, stream::pattern);
  std::vector<std::uint8_t> p(slots);
  for (auto& b : p) b = static_cast<std::uint8_t>(rng() >> 63);
  return p;
}

struct SimScenario {
  ClockPair clocks;
  OpticalLink link;
  SpadModel spad;
  TdcModel tdc;
  OscillatorNoise noise;
  double t_bin = 1.0 * units::ns;
  double mean_photon = 0.225;
  std::vector<std::uint8_t> qubit_pattern;
  std::uint64_t rng_seed = 1;
  double intrinsic_error = 0.0;
  bool linear_detection = false;  // p = n eta instead of 1 - exp(-n eta)

  double slot_period() const { return 1.0 / clocks.f_alice; }

  void validate() const {
    clocks.validate();
    link.validate();
    spad.validate();
    tdc.validate();
    detail::require(t_bin > 0.0, "t_bin must be positive");
    detail::require(mean_photon >= 0.0, "mean photon number must be nonnegative");
    detail::require(intrinsic_error >= 0.0 && intrinsic_error <= 0.5, "intrinsic error must be in [0, 0.5]");
    detail::require(std::abs(slot_period() - 2.0 * t_bin) <= 1e-9 * t_bin,
                    "the pulse period 1/f_A must equal 2 T_bin");
  }

  QubitSource qubits() const { return {qubit_pattern, derive_seed(rng_seed, stream::bits)}; }
};

enum class Label : std::uint8_t { early = 0, late = 1, dark = 2 };

/// Detection in Bob's frame: time = cycle * slot_period + delay, with
/// delay in [0, slot_period). Splitting keeps sub-ps resolution over days.
struct Event {
  std::int64_t cycle = 0;
  double delay = 0.0;
  Label label = Label::dark;
  std::int64_t slot = -1;  // Alice pulse index, -1 for dark counts

  double time(double slot_period) const { return static_cast<double>(cycle) * slot_period + delay; }
};

/// (cycle * P + delay + shift) mod fold_period, where P and fold_period are
/// commensurate.
inline double folded_delay(const Event& e, double slot_period, double shift, double fold_period) {
  double base = 0.0;
  std::int64_t ratio = 0;
  if (numeric::is_integer_ratio(fold_period, slot_period, &ratio)) {
    base = static_cast<double>(numeric::wrap_index(e.cycle, ratio)) * slot_period;
  } else if (!numeric::is_integer_ratio(slot_period, fold_period, &ratio)) {
    throw ConfigError("fold period and slot period are not commensurate");
  }
  return numeric::wrap(base + e.delay + shift, fold_period);
}

/// Stateful detection-event generator. Successive calls to generate_until
/// continue the same stream; the trajectory may be updated in between.
class EventSource {
 public:
  EventSource(const SimScenario& sc, ClockTrajectory& traj)
      : sc_(sc),
        traj_(traj),
        qubits_(sc.qubits()),
        photon_rng_(make_rng(sc.rng_seed, stream::photons)),
        dark_rng_(make_rng(sc.rng_seed, stream::darks)),
        sigma_(pulse_sigma_at_distance(sc.link)),
        eta_ch_(channel_transmittance(sc.link)),
        period_(sc.slot_period()) {
    sc_.validate();
    set_mean_photon(sc.mean_photon);
    next_dark_ = draw_dark(0.0);
  }

  void set_mean_photon(double n) {
    detail::require(n >= 0.0, "mean photon number must be nonnegative");
    const double mu = n * sc_.spad.efficiency * eta_ch_;
    p_ = sc_.linear_detection ? std::min(mu, 1.0) : -std::expm1(-mu);
  }

  double detection_probability() const { return p_; }
  double now() const { return now_; }

  /// Appends every detection with time in [now, t_end) and advances now.
  void generate_until(double t_end, std::vector<Event>& out) {
    while (true) {
      if (!pending_) pending_ = next_event();
      if (!pending_ || pending_->time(period_) >= t_end) break;
      out.push_back(*pending_);
      pending_.reset();
    }
    now_ = t_end;
  }

 private:
  std::optional<Event> next_event() {
    const std::optional<Event> photon = next_photon();
    const double tp = photon ? photon->time(period_) : std::numeric_limits<double>::infinity();
    if (!photon && !std::isfinite(next_dark_)) return std::nullopt;
    Event e;
    if (next_dark_ < tp) {
      e.cycle = static_cast<std::int64_t>(std::floor(next_dark_ / period_));
      e.delay = next_dark_ - static_cast<double>(e.cycle) * period_;
      e.label = Label::dark;
      e.slot = -1;
    } else {
      e = *photon;
    }
    const double t = e.time(period_);
    blind_end_ = t + sc_.spad.dead_time;
    // Restart both processes at the end of the blind interval (memoryless).
    if (e.slot >= 0) last_detected_ = e.slot;
    const auto resume = static_cast<std::int64_t>(std::floor((blind_end_ - last_shift_) / period_)) - 4;
    next_pulse_ = std::max<std::int64_t>({resume, last_detected_ + 1, 0});
    next_dark_ = draw_dark(blind_end_);
    return e;
  }

  std::optional<Event> next_photon() {
    if (!(p_ > 0.0)) return std::nullopt;
    std::geometric_distribution<std::int64_t> skip(p_);
    while (true) {
      const std::int64_t n = (p_ >= 1.0) ? next_pulse_ : next_pulse_ + skip(photon_rng_);
      next_pulse_ = n + 1;
      const double t_emit = static_cast<double>(n) * period_;
      const double x = traj_.shift(t_emit);
      last_shift_ = x;
      const int bit = qubits_.bit(n);
      const double mu = (bit == 0 ? 0.5 : 1.5) * sc_.t_bin;
      const double off = x + mu + sigma_ * sample_normal(photon_rng_) + sample_spad_jitter(photon_rng_, sc_.spad);
      const double whole = std::floor(off / period_);
      Event e;
      e.cycle = n + static_cast<std::int64_t>(whole);
      e.delay = off - whole * period_;
      e.label = bit == 0 ? Label::early : Label::late;
      e.slot = n;
      if (e.time(period_) >= blind_end_) return e;
    }
  }

  double draw_dark(double from) {
    if (!(sc_.spad.dark_count_rate > 0.0)) return std::numeric_limits<double>::infinity();
    return from + std::exponential_distribution<double>(sc_.spad.dark_count_rate)(dark_rng_);
  }

  SimScenario sc_;
  ClockTrajectory& traj_;
  QubitSource qubits_;
  Rng photon_rng_;
  Rng dark_rng_;
  double sigma_;
  double eta_ch_;
  double period_;
  double p_ = 0.0;
  std::int64_t next_pulse_ = 0;
  std::int64_t last_detected_ = -1;
  double blind_end_ = 0.0;
  double next_dark_ = 0.0;
  double last_shift_ = 0.0;
  double now_ = 0.0;
  std::optional<Event> pending_;
};

/// One-shot stream over [0, duration) of a fresh scenario.
inline std::vector<Event> sample_event_stream(const SimScenario& sc, double duration) {
  detail::require(duration > 0.0, "duration must be positive");
  ClockTrajectory traj(sc.clocks, sc.noise, sc.rng_seed);
  EventSource src(sc, traj);
  std::vector<Event> out;
  src.generate_until(duration, out);
  return out;
}

inline Histogram build_histogram(const std::vector<Event>& events, const TdcModel& tdc, double t_a,
                                 double t_b, double fold_period, double slot_period) {
  Histogram h = empty_histogram(tdc.bins(fold_period), tdc.bin_width, t_a, t_b - t_a);
  const double shift = tdc.delay_register();
  const auto n = static_cast<std::int64_t>(h.counts.size());
  for (const Event& e : events) {
    const double t = e.time(slot_period);
    if (t < t_a || t >= t_b) continue;
    const double d = folded_delay(e, slot_period, shift, fold_period);
    auto k = static_cast<std::int64_t>(std::floor(d / tdc.bin_width));
    k = std::clamp<std::int64_t>(k, 0, n - 1);
    h.add(static_cast<std::size_t>(k));
  }
  return h;
}

/// Expected counts per bin of a folded pdf plus flat darks.
inline std::vector<double> expected_counts(const ArrivalPdf& folded_pdf, const EffectiveRates& rates,
                                           double t_int, const TdcModel& tdc) {
  if (!folded_pdf.folded()) throw ConfigError("expected_counts: pdf must be folded");
  const std::size_t n = tdc.bins(folded_pdf.period());
  std::vector<double> lambda(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = static_cast<double>(k) * tdc.bin_width;
    const double p = folded_pdf.integrate(a, a + tdc.bin_width);
    lambda[k] = t_int * (rates.cps_eff_alice * p + rates.cps_eff_dc / static_cast<double>(n));
  }
  return lambda;
}

inline Histogram poisson_histogram(const ArrivalPdf& folded_pdf, const EffectiveRates& rates, double t_int,
                                   const TdcModel& tdc, Rng& rng) {
  const std::vector<double> lambda = expected_counts(folded_pdf, rates, t_int, tdc);
  Histogram h = empty_histogram(lambda.size(), tdc.bin_width, 0.0, t_int);
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    if (lambda[k] <= 0.0) continue;
    h.add(k, std::poisson_distribution<std::int64_t>(lambda[k])(rng));
  }
  return h;
}

inline Histogram poisson_histogram(const ArrivalPdf& folded_pdf, const EffectiveRates& rates, double t_int,
                                   const TdcModel& tdc, std::uint64_t seed) {
  Rng rng = make_rng(seed, stream::poisson);
  return poisson_histogram(folded_pdf, rates, t_int, tdc, rng);
}

enum class AssignmentRule {
  truth_label,  // compare with the emitted label (drift-only error model)
  sifted,       // compare with Alice's bit at Bob's slot (needs the offset)
};

struct QberContext {
  double t_bin = 1.0 * units::ns;
  double slot_period = 2.0 * units::ns;
  double delay_register = 0.0;
  double window = 300.0 * units::ps;
  QubitSource qubits;
  double intrinsic_error = 0.0;
  std::uint64_t flip_key = 0;
  AssignmentRule rule = AssignmentRule::sifted;
};

struct QberResult {
  double qber_unfiltered = 0.0;
  double qber_filtered = 0.0;
  double kept_fraction = 0.0;
  std::int64_t n_unfiltered = 0;
  std::int64_t errors_unfiltered = 0;
  std::int64_t n_filtered = 0;
  std::int64_t errors_filtered = 0;
};

inline QberResult measure_qber(const std::vector<Event>& events, const QberContext& ctx) {
  QberResult r;
  const double p = ctx.slot_period;
  const double lo_e = 0.5 * ctx.t_bin - 0.5 * ctx.window;
  const double lo_l = 1.5 * ctx.t_bin - 0.5 * ctx.window;
  for (const Event& e : events) {
    const double d = numeric::wrap(e.delay + ctx.delay_register, p);
    const int bob = d < ctx.t_bin ? 0 : 1;
    int alice = 0;
    if (ctx.rule == AssignmentRule::truth_label && e.label != Label::dark) {
      alice = e.label == Label::early ? 0 : 1;
    } else if (ctx.rule == AssignmentRule::truth_label) {
      alice = hash_uniform(ctx.flip_key ^ 0x5bd1e995ULL, static_cast<std::uint64_t>(e.cycle)) < 0.5 ? 0 : 1;
    } else {
      const std::int64_t slot = e.cycle + static_cast<std::int64_t>(std::floor((e.delay + ctx.delay_register) / p));
      alice = ctx.qubits.bit(slot);
    }
    bool flip = false;
    if (ctx.intrinsic_error > 0.0)
      flip = hash_uniform(ctx.flip_key, static_cast<std::uint64_t>(e.cycle) * 2654435761ULL +
                                            static_cast<std::uint64_t>(e.delay * 1e15)) < ctx.intrinsic_error;
    const bool wrong = (bob != alice) != flip;
    ++r.n_unfiltered;
    r.errors_unfiltered += wrong ? 1 : 0;
    const bool in_e = d >= lo_e && d < lo_e + ctx.window;
    const bool in_l = d >= lo_l && d < lo_l + ctx.window;
    if (in_e || in_l) {
      ++r.n_filtered;
      r.errors_filtered += wrong ? 1 : 0;
    }
  }
  if (r.n_unfiltered > 0) {
    r.qber_unfiltered = static_cast<double>(r.errors_unfiltered) / static_cast<double>(r.n_unfiltered);
    r.kept_fraction = static_cast<double>(r.n_filtered) / static_cast<double>(r.n_unfiltered);
  }
  if (r.n_filtered > 0)
    r.qber_filtered = static_cast<double>(r.errors_filtered) / static_cast<double>(r.n_filtered);
  return r;
}

}  // namespace qkdsync
