#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include <qkdsync/plant.hpp>
#include <qkdsync/sync.hpp>

using namespace qkdsync;

namespace {

constexpr double ps = 1e-12;
constexpr double kTbin = 1e-9;

/// Deterministic plant: histograms are scaled expected counts of a Gaussian
/// lobe pair whose offset walks linearly with the current drift.
class ExpectedCountPlant {
 public:
  ExpectedCountPlant(double drift, double offset, double sigma) : drift_(drift), x0_(offset), sigma_(sigma) {}

  Acquisition acquire(double t_int, double, bool) {
    Acquisition a;
    a.t_start = now_;
    a.t_end = now_ + t_int;
    a.hist = empty_histogram(20, 100 * ps, now_, t_int);
    const int sub = 64;
    std::vector<double> w(20, 0.0);
    for (int s = 0; s < sub; ++s) {
      const double t = now_ + (s + 0.5) / sub * t_int;
      const double c = offset_at(t) + delay_;
      for (double mu : {0.5 * kTbin, 1.5 * kTbin}) {
        for (int k = 0; k < 20; ++k) {
          for (int m = -3; m <= 3; ++m) {
            const double lo = k * 100 * ps + m * 2 * kTbin - (mu + c);
            w[static_cast<std::size_t>(k)] += numeric::normal_cdf_diff(lo / sigma_, (lo + 100 * ps) / sigma_);
          }
        }
      }
    }
    for (std::size_t k = 0; k < 20; ++k) a.hist.add(k, std::llround(1e7 * w[k] / (2.0 * sub)));
    now_ += t_int;
    return a;
  }

  void apply_frequency_update(double e) {
    x0_ = offset_at(now_);
    t_ref_ = now_;
    drift_ = (drift_ - e) / (1.0 + e);
  }
  void add_delay_steps(std::int64_t steps) { delay_ += static_cast<double>(steps) * delay_resolution(); }
  double delay_resolution() const { return 11 * ps; }
  double bin_width() const { return 100 * ps; }
  double drift() const { return drift_; }

 private:
  double offset_at(double t) const { return x0_ + drift_ * (t - t_ref_); }

  double drift_;
  double x0_;
  double sigma_;
  double t_ref_ = 0.0;
  double now_ = 0.0;
  double delay_ = 0.0;
};

static_assert(AcquisitionSource<ExpectedCountPlant>);
static_assert(AcquisitionSource<PoissonPlant>);

CircularMean mean_of_gaussian(double center, double sigma) {
  std::vector<double> w(1000);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double t = (static_cast<double>(i) + 0.5) * ps;
    for (int m = -3; m <= 3; ++m) w[i] += std::exp(-0.5 * std::pow((t - center - m * kTbin) / sigma, 2));
  }
  return circular_mean(w, ps, kTbin);
}

}  // namespace

TEST(CircularMean, RecoversCenter) {
  for (double c : {100 * ps, 500 * ps, 937 * ps}) {
    const CircularMean m = mean_of_gaussian(c, 80 * ps);
    EXPECT_NEAR(circular_center(m, kTbin, 0.0), c, 0.01 * ps);
    EXPECT_NEAR(m.modulus(), std::exp(-0.5 * std::pow(2 * std::numbers::pi * 80 * ps / kTbin, 2)), 1e-6);
  }
}

TEST(CircularMean, EmptyHistogramThrows) {
  const Histogram h = empty_histogram(20, 100 * ps, 0.0, 1.0);
  EXPECT_THROW(circular_mean(h, kTbin), FlatHistogramError);
}

TEST(Estimators, DriftFromPhaseDifference) {
  const double t_int = 1e-4;
  for (double d : {-3e-6, -1e-6, 0.0, 2e-6, 4.5e-6}) {
    const CircularMean m1 = mean_of_gaussian(400 * ps, 60 * ps);
    const CircularMean m2 = mean_of_gaussian(400 * ps + d * t_int, 60 * ps);
    EXPECT_NEAR(estimate_drift(m1, m2, t_int, kTbin), d, 1e-10);
  }
}

TEST(Estimators, FlatInputIsRejected) {
  const CircularMean good = mean_of_gaussian(400 * ps, 60 * ps);
  const CircularMean flat = mean_of_gaussian(400 * ps, 600 * ps);
  EXPECT_THROW(estimate_drift(good, flat, 1e-3, kTbin), FlatHistogramError);
}

TEST(Estimators, ZeroDriftAtTargetNeedsNoDelay) {
  const CircularMean m = mean_of_gaussian(500 * ps, 80 * ps);
  EXPECT_NEAR(estimate_delay(m, 0.0, 0.5, kTbin, 500 * ps, 0.0), 0.0, 0.01 * ps);
  const CircularMean off = mean_of_gaussian(430 * ps, 80 * ps);
  EXPECT_NEAR(estimate_delay(off, 0.0, 0.5, kTbin, 500 * ps, 0.0), 70 * ps, 0.01 * ps);
}

TEST(Estimators, DelayFormsAgree) {
  const double t_int = 2e-4, d = 1.2e-6;
  // Means of a lobe walking over [0, T] and [T, 2T].
  const CircularMean m1 = mean_of_gaussian(300 * ps + 0.5 * d * t_int, 60 * ps);
  const CircularMean m2 = mean_of_gaussian(300 * ps + 1.5 * d * t_int, 60 * ps);
  EXPECT_NEAR(estimate_delay(m1, d, t_int, kTbin, 500 * ps, 0.0),
              estimate_delay_from_m2(m2, d, t_int, kTbin, 500 * ps, 0.0), 0.01 * ps);
  // Target minus the end-of-acquisition center.
  EXPECT_NEAR(estimate_delay(m1, d, t_int, kTbin, 500 * ps, 0.0), 200 * ps - 2 * d * t_int, 0.01 * ps);
}

TEST(Estimators, SpadSkewBiasesUncorrectedCenter) {
  const SpadModel spad;
  QberParams p;
  p.sigma = 40 * ps;
  p.spad = spad;
  const ArrivalPdf f = folded_lobe(p, 0.5 * kTbin);
  std::vector<double> w(2000);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = f.integrate(static_cast<double>(i) * ps, static_cast<double>(i + 1) * ps);
  const CircularMean m = circular_mean(w, ps, kTbin);
  const double phi_q = spad_phase_bias(spad, kTbin);
  EXPECT_NEAR(circular_center(m, kTbin, 0.0) - 500 * ps, kTbin / (2 * std::numbers::pi) * phi_q, 0.05 * ps);
  EXPECT_NEAR(circular_center(m, kTbin, 0.0) - 500 * ps, -4.13 * ps, 0.05 * ps);
  EXPECT_NEAR(circular_center(m, kTbin, phi_q), 500 * ps, 0.05 * ps);
}

TEST(OffsetRecovery, FindsCyclicShift) {
  const auto pattern = make_pattern(500, 17);
  const ArrivalPdf lobe = drift_pdf_grid(100 * ps, 0.0, 0.0, 0.5 * kTbin);
  const auto tmpl = pattern_template(pattern, lobe, kTbin, 100 * ps);
  ASSERT_EQ(tmpl.size(), 10000u);
  for (std::int64_t shift : {137, -250, 0, 4321}) {
    Histogram h = empty_histogram(tmpl.size(), 100 * ps, 0.0, 1.0);
    const auto n = static_cast<std::int64_t>(tmpl.size());
    for (std::int64_t i = 0; i < n; ++i)
      h.add(static_cast<std::size_t>(numeric::wrap_index(i + shift, n)), std::llround(50.0 * tmpl[static_cast<std::size_t>(i)]) + 1);
    const OffsetLock lock = recover_offset(h, tmpl);
    EXPECT_EQ(lock.shift_bins, shift);
    EXPECT_NEAR(lock.shift, static_cast<double>(shift) * 100 * ps, 1e-18);
    EXPECT_GT(lock.correlation, 0.9);
  }
}

TEST(OffsetRecovery, RejectsUncorrelatedHistogram) {
  const auto pattern = make_pattern(500, 17);
  const auto tmpl = pattern_template(pattern, drift_pdf_grid(100 * ps, 0.0, 0.0, 0.5 * kTbin), kTbin, 100 * ps);
  Histogram h = empty_histogram(tmpl.size(), 100 * ps, 0.0, 1.0);
  Rng rng = make_rng(5, stream::poisson);
  for (std::size_t i = 0; i < tmpl.size(); ++i) h.add(i, std::poisson_distribution<std::int64_t>(3.0)(rng));
  EXPECT_THROW(recover_offset(h, tmpl), NoLockError);
  Histogram flat = empty_histogram(tmpl.size(), 100 * ps, 0.0, 1.0);
  for (std::size_t i = 0; i < tmpl.size(); ++i) flat.add(i, 2);
  EXPECT_THROW(recover_offset(flat, tmpl), NoLockError);
}

TEST(Controller, NoiselessTrackingContracts) {
  ExpectedCountPlant plant(2e-6, 237 * ps, 100 * ps);
  SyncConfig cfg;
  cfg.start_tracking = true;
  cfg.t_int_max = 155e-6;
  cfg.tracking_iterations = 3;
  const SyncState st = run_ramp_controller(plant, cfg);
  ASSERT_EQ(st.history.size(), 3u);
  EXPECT_NEAR(st.history[0].drift_est, 2e-6, 1e-9);
  EXPECT_LT(std::abs(plant.drift()), 1e-9);
  EXPECT_NEAR(st.history.back().mean_center, 500 * ps, 11 * ps);
}

TEST(Controller, DelayQuantizationCarriesResidue) {
  ExpectedCountPlant plant(0.0, 237 * ps, 100 * ps);
  SyncConfig cfg;
  cfg.start_tracking = true;
  cfg.t_int_max = 1e-3;
  cfg.tracking_iterations = 6;
  const SyncState st = run_ramp_controller(plant, cfg);
  for (std::size_t i = 0; i < st.history.size(); ++i) {
    const TraceRow& r = st.history[i];
    EXPECT_NEAR(std::remainder(r.delay_applied, 11 * ps), 0.0, 1e-18);
    if (i > 0) EXPECT_NEAR(r.mean_center, 500 * ps, 11 * ps);
  }
  EXPECT_NEAR(st.history[0].delay_applied, -242 * ps, 1e-18);
  EXPECT_LE(std::abs(st.delay_residue), 5.5 * ps + 1e-18);
}

TEST(Controller, ZeroDriftEventPlantStaysLocked) {
  SimScenario sc;
  sc.link.fiber_length = 50e3;  // 10 dB
  sc.clocks = ClockPair::with_drift(500e6, 0.0, 0.0);
  sc.rng_seed = 21;
  sc.qubit_pattern = make_pattern(500, 21);
  EventPlant plant(sc, 300 * ps);
  SyncConfig cfg;
  cfg.start_tracking = true;
  cfg.t_int_max = 0.05;
  cfg.tracking_iterations = 8;
  cfg.phi_q = spad_phase_bias(sc.spad, kTbin);
  const SyncState st = run_ramp_controller(plant, cfg);
  for (const TraceRow& r : st.history) {
    EXPECT_LT(std::abs(r.drift_est), 30e-12 / 0.05 * 4);
    EXPECT_NEAR(r.mean_center, 500 * ps, 25 * ps);
  }
}

TEST(PracticalLimit, ScalesWithPhotonBudget) {
  const SpadModel spad;
  OpticalLink link;
  link.fiber_length = 100e3;  // 20 dB
  const double eta = channel_transmittance(link);
  const PracticalLimit a = practical_drift_limit(10.0, 10.0, spad, 500e6, eta, kTbin);
  EXPECT_NEAR(a.t_int, 155e-6, 0.05 * 155e-6);
  EXPECT_NEAR(a.raw, kTbin / (2 * a.t_int), 1e-18);
  EXPECT_NEAR(a.practical, 0.7 * a.raw, 1e-18);
  const PracticalLimit b = practical_drift_limit(10.0, 20.0, spad, 500e6, eta, kTbin);
  EXPECT_NEAR(b.raw, 0.5 * a.raw, 1e-12 * a.raw);
  EXPECT_THROW(practical_drift_limit(0.5, 1e4, kTbin), ConfigError);
}

TEST(TimeToTracking, FirstQualifyingTrackingRow) {
  SyncState st;
  TraceRow r;
  r.phase = SyncPhase::ramping;
  r.qber = 0.001;
  r.t_cumulative = 0.1;
  st.history.push_back(r);
  r.phase = SyncPhase::tracking;
  r.qber = 0.2;
  r.t_cumulative = 0.2;
  st.history.push_back(r);
  r.qber = 0.005;
  r.t_cumulative = 1.2;
  st.history.push_back(r);
  EXPECT_EQ(time_to_tracking(st, 0.003), 1.2);
  EXPECT_FALSE(time_to_tracking(st, 0.001).has_value());
}
