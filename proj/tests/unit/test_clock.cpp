#include <cmath>

#include <gtest/gtest.h>

#include <qkdsync/clock.hpp>
#include <qkdsync/units.hpp>

using namespace qkdsync;

namespace {
constexpr double kYear = 365.25 * 24 * 3600.0;
}

TEST(Clock, DriftFromFrequencies) {
  const ClockPair c = ClockPair::with_drift(500e6, 2.3e-6);
  EXPECT_NEAR(c.drift(), 2.3e-6, 1e-15);
  EXPECT_NEAR(c.f_bob - c.f_alice, 1150.0, 1e-6);
}

TEST(Clock, UnambiguousDriftLimit) {
  EXPECT_NEAR(max_unambiguous_drift(1e-9, 15e-6), 33.333e-6, 1e-9);
  EXPECT_NEAR(max_unambiguous_drift(2e-9, 15e-6), 66.667e-6, 1e-9);
  EXPECT_NEAR(max_unambiguous_drift(1e-9, 30e-6), 16.667e-6, 1e-9);
  EXPECT_THROW(max_unambiguous_drift(1e-9, 0.0), ConfigError);
}

TEST(Clock, CalibrationInterval) {
  // 50 ppm over ten years, clocks aging in opposite directions.
  const double aging = opposing_clocks_aging(50e-6, 10 * kYear);
  EXPECT_NEAR(max_calibration_interval(aging, 1e-9, 15e-6) / kYear, 3.333, 1e-3);
  EXPECT_NEAR(max_calibration_interval(aging, 2.3e-6) / kYear, 0.23, 1e-9);
  EXPECT_NEAR(max_calibration_interval(2.0 * aging, 2.3e-6) / kYear, 0.115, 1e-9);
  EXPECT_TRUE(std::isinf(max_calibration_interval(0.0, 2.3e-6)));
}

TEST(Clock, TimeShiftPolynomial) {
  ClockPair c = ClockPair::with_drift(500e6, 1e-6, 5e-12, 1e-9);
  EXPECT_NEAR(time_shift(c, 2.0), 1e-6 * 2.0 + 0.5 * 1e-9 * 4.0 + 5e-12, 1e-15);
  EXPECT_NEAR(expected_arrival(c, 2.0, 0.5e-9), 2e-6 + 5e-12 + 0.5e-9, 1e-15);
}

TEST(Clock, FrequencyUpdateResidual) {
  for (double d : {-3e-6, -1e-7, 0.0, 4e-7, 2.3e-6}) {
    for (double e : {-2e-6, 0.0, 1e-6, 2.3e-6}) {
      const ClockPair c = ClockPair::with_drift(500e6, d);
      const ClockPair u = apply_frequency_update(c, e);
      EXPECT_NEAR(u.drift(), residual_drift(d, e), 1e-15);
      EXPECT_NEAR(residual_drift(d, e), (d - e) / (1.0 + e), 0.0);
    }
  }
  const ClockPair c = ClockPair::with_drift(500e6, 2.3e-6);
  EXPECT_NEAR(apply_frequency_update(c, 2.3e-6).drift(), 0.0, 1e-15);
}

TEST(Clock, AliceCalibrationHitsTarget) {
  const ClockPair c = ClockPair::with_drift(500e6, 3e-6);
  for (double target : {0.0, 1e-6, -2e-6}) {
    ClockPair cal = c;
    cal.f_alice = init_alice_calibration(c, c.drift(), target);
    EXPECT_NEAR(cal.drift(), target, 1e-14);
  }
}

TEST(Clock, ComposeDriftAgainstCommonReference) {
  const double fr = 10e6;
  const double da = 1.5e-6, db = -0.7e-6;
  const double fa = fr * (1.0 + da), fb = fr * (1.0 + db);
  EXPECT_NEAR(compose_drift(da, db), (fb - fa) / fa, 1e-15);
  EXPECT_NEAR(compose_drift(da, da), 0.0, 0.0);
}

TEST(Clock, ShortTermBound) {
  TimingBudget b;
  b.t_int = 0.5;
  const double bound = short_term_stability_bound(b, 23e-12);
  EXPECT_NEAR(bound, 23e-12, 1e-24);
  b.t_int = 1.0;
  EXPECT_NEAR(short_term_stability_bound(b, 23e-12), bound / 4.0, 1e-24);
}

TEST(Clock, ValidateRejectsHugeDrift) {
  ClockPair c = ClockPair::with_drift(500e6, 0.0);
  c.f_bob = 2.0 * c.f_alice;
  EXPECT_THROW(c.validate(), ConfigError);
}
