#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <qkdsync/metrics.hpp>

using namespace qkdsync;

namespace {

TimeSeries series(std::vector<double> v, double tau0 = 1.0) {
  TimeSeries s;
  for (std::size_t i = 0; i < v.size(); ++i) s.timestamps.push_back(tau0 * static_cast<double>(i));
  s.values = std::move(v);
  return s;
}

}  // namespace

TEST(Tdev, ConstantAndLinearSeriesVanish) {
  std::vector<double> c(500, 42.0), lin(500);
  for (std::size_t i = 0; i < lin.size(); ++i) lin[i] = 3.0 + 0.25 * static_cast<double>(i);
  for (std::size_t n : {1u, 2u, 8u, 64u}) {
    EXPECT_NEAR(tdev_at(c, n), 0.0, 1e-12);
    EXPECT_NEAR(tdev_at(lin, n), 0.0, 1e-9);
  }
}

TEST(Tdev, QuadraticClosedForm) {
  const double a = 0.01;
  std::vector<double> q(400);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = a * static_cast<double>(i * i);
  for (std::size_t n : {1u, 3u, 10u, 40u}) {
    const double nn = static_cast<double>(n);
    EXPECT_NEAR(tdev_at(q, n), a * nn * nn * std::sqrt(2.0 / 3.0), 1e-9 * nn * nn);
  }
}

TEST(Tdev, WhitePhaseNoiseFallsAsRootN) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 2.0);
  std::vector<double> x(200000);
  for (double& v : x) v = g(rng);
  for (std::size_t n : {1u, 4u, 16u}) EXPECT_NEAR(tdev_at(x, n), 2.0 / std::sqrt(static_cast<double>(n)), 0.03 * 2.0 / std::sqrt(n));
}

TEST(Tdev, ScalesLinearlyWithAmplitude) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<double> x(3000), y(3000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = g(rng);
    y[i] = -5.0 * x[i] + 7.0;
  }
  EXPECT_NEAR(tdev_at(y, 5), 5.0 * tdev_at(x, 5), 1e-9);
}

TEST(Tdev, TauGridAndValidation) {
  const TimeSeries s = series(std::vector<double>(100, 1.0), 0.5);
  const auto taus = octave_taus(0.5, 100);
  ASSERT_EQ(taus.size(), 6u);  // 1..32 samples
  EXPECT_EQ(taus.back(), 16.0);
  const auto pts = tdev(s, taus);
  EXPECT_EQ(pts.size(), taus.size());
  EXPECT_THROW(tdev(s, {0.75}), ConfigError);
  EXPECT_THROW(tdev_at(s.values, 34), ConfigError);
  TimeSeries bad = s;
  bad.timestamps[50] += 0.1;
  EXPECT_THROW(tdev(bad, {0.5}), ConfigError);
}

TEST(Summary, MeanAndSampleStd) {
  const SeriesSummary s = summarize(std::vector<double>{1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(s.count, 4u);
  const SeriesSummary one = summarize(std::vector<double>{7.0});
  EXPECT_FALSE(one.std_defined);
  EXPECT_THROW(summarize(std::vector<double>{}), ConfigError);
}

TEST(MovingAverage, CenteredWithShrinkingEdges) {
  const TimeSeries s = series({1, 2, 3, 4, 5, 6});
  const TimeSeries m = moving_average(s, 3.0);
  const std::vector<double> expected{1.5, 2.0, 3.0, 4.0, 5.0, 5.5};
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(m.values[i], expected[i], 1e-12);
  EXPECT_THROW(moving_average(s, 0.5), ConfigError);
}

TEST(MovingAverage, PreservesMeanOfConstant) {
  const TimeSeries m = moving_average(series(std::vector<double>(50, 3.25)), 11.0);
  for (double v : m.values) EXPECT_DOUBLE_EQ(v, 3.25);
}

TEST(Series, RejectsNonIncreasingTimestamps) {
  TimeSeries s = series({1, 2, 3});
  s.timestamps[2] = s.timestamps[1];
  EXPECT_THROW(s.validate(), ConfigError);
}
