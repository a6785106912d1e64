#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/skew_normal.hpp>
#include <gtest/gtest.h>

#include <qkdsync/pdf_engine.hpp>

using namespace qkdsync;

namespace {

constexpr double ps = 1e-12;

QberParams params(double sigma, double drift_product, double window) {
  QberParams p;
  p.sigma = sigma;
  p.spad = SpadModel{};
  p.drift_product = drift_product;
  p.window = window;
  return p;
}

}  // namespace

TEST(DriftPdf, UnitMassAndMoments) {
  for (double sigma : {20 * ps, 100 * ps}) {
    for (double dp : {0.0, 50 * ps, 400 * ps, -300 * ps}) {
      const ArrivalPdf p = drift_pdf_grid(sigma, dp, 3 * ps, 500 * ps);
      EXPECT_NEAR(p.total_mass(), 1.0, 1e-9);
      EXPECT_NEAR(p.mean(), 500 * ps + 3 * ps + 0.5 * dp, 1e-15);
      EXPECT_NEAR(p.stddev(), std::sqrt(sigma * sigma + dp * dp / 12.0), 1e-4 * p.stddev());
      EXPECT_NEAR(drift_pdf_mean(dp, 3 * ps, 500 * ps), 503 * ps + 0.5 * dp, 1e-18);
      EXPECT_NEAR(drift_pdf_stddev(sigma, dp), std::sqrt(sigma * sigma + dp * dp / 12.0), 1e-20);
    }
  }
}

TEST(DriftPdf, GaussianLimit) {
  const double sigma = 60 * ps;
  const boost::math::normal_distribution<double> g(400 * ps, sigma);
  for (double t = 100 * ps; t < 700 * ps; t += 13 * ps) {
    EXPECT_NEAR(drift_pdf(sigma, 0.0, 0.0, 400 * ps, t), boost::math::pdf(g, t), 1e-9 * boost::math::pdf(g, 400 * ps));
    // A tiny smear agrees with the unsmeared density.
    EXPECT_NEAR(drift_pdf(sigma, 1e-3 * ps, 0.0, 400 * ps, t), boost::math::pdf(g, t), 1e-4 * boost::math::pdf(g, 400 * ps));
  }
}

TEST(DriftPdf, UniformSmearLimit) {
  // sigma much smaller than the smear: flat top of height 1 / smear.
  const double dp = 600 * ps;
  EXPECT_NEAR(drift_pdf(1 * ps, dp, 0.0, 0.0, 300 * ps), 1.0 / dp, 1e-6 / dp);
  EXPECT_NEAR(drift_pdf(1 * ps, dp, 0.0, 0.0, -50 * ps), 0.0, 1e-6 / dp);
}

TEST(SpadConvolution, GaussianTimesSkewNormalIsSkewNormal) {
  const SpadModel spad;
  const double sigma = 80 * ps;
  const double c = 500 * ps;
  const ArrivalPdf p = convolve_spad(drift_pdf_grid(sigma, 0.0, 0.0, c), spad);
  const double w = spad.skew_scale;
  const double w2 = std::sqrt(w * w + sigma * sigma);
  const double d2 = w * spad.delta() / w2;
  const double a2 = d2 / std::sqrt(1.0 - d2 * d2);
  const boost::math::skew_normal_distribution<double> sn(c + spad.location(), w2, a2);
  const double peak = boost::math::pdf(sn, boost::math::mode(sn));
  for (double t = 0.0; t < 1200 * ps; t += 17 * ps) EXPECT_NEAR(p(t), boost::math::pdf(sn, t), 2e-4 * peak) << t;
  EXPECT_NEAR(p.total_mass(), 1.0, 1e-9);
  EXPECT_NEAR(p.mean(), c, 0.01 * ps);
  EXPECT_NEAR(p.stddev(), std::sqrt(sigma * sigma + spad.variance()), 0.01 * ps);
}

TEST(Fold, ConservesMassAndPeriod) {
  const ArrivalPdf p = convolve_spad(drift_pdf_grid(300 * ps, 900 * ps, 0.0, 500 * ps), SpadModel{});
  const ArrivalPdf f = fold(p, 2e-9);
  EXPECT_TRUE(f.folded());
  EXPECT_NEAR(f.period(), 2e-9, 1e-21);
  EXPECT_NEAR(f.total_mass(), p.total_mass(), 1e-12);
  EXPECT_THROW(fold(f, 2e-9), ConfigError);
  EXPECT_THROW(fold(p, 2e-9, 0, 0), NumericalError);
}

TEST(Fold, FirstHarmonicSurvivesFolding) {
  const ArrivalPdf p = convolve_spad(drift_pdf_grid(100 * ps, 250 * ps, 0.0, 500 * ps), SpadModel{});
  const ArrivalPdf f = fold(p, 2e-9);
  const auto a = p.fourier(1e-9);
  const auto b = f.fourier(1e-9);
  EXPECT_NEAR(std::abs(a - b), 0.0, 1e-9);
}

TEST(Qber, BothLobeFormMatchesSymmetricForm) {
  for (double dp : {0.0, 200 * ps, 600 * ps}) {
    for (double w : {300 * ps, 1000 * ps}) {
      const QberParams p = params(103.6 * ps, dp, w);
      EXPECT_NEAR(drift_qber(p), drift_qber_both_lobes(p), 1e-12);
    }
  }
}

TEST(Qber, MonotoneInDriftProduct) {
  const QberParams base = params(103.6 * ps, 0.0, 300 * ps);
  double prev = -1.0;
  for (double dp = 0.0; dp <= 1000 * ps; dp += 50 * ps) {
    QberParams p = base;
    p.drift_product = dp;
    const double q = drift_qber(p);
    EXPECT_GE(q, prev - 1e-12);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 0.5 + 1e-9);
    prev = q;
  }
}

TEST(Qber, NarrowerWindowLowersQber) {
  double prev = 1.0;
  for (double w : {1000 * ps, 700 * ps, 500 * ps, 300 * ps}) {
    const double q = drift_qber(params(103.6 * ps, 200 * ps, w));
    EXPECT_LT(q, prev);
    prev = q;
  }
}

TEST(Qber, SignOfDriftDoesNotMatter) {
  EXPECT_NEAR(drift_qber(params(80 * ps, 300 * ps, 500 * ps)), drift_qber(params(80 * ps, -300 * ps, 500 * ps)), 2e-4);
}

TEST(Qber, FullDriftIsNearlyRandom) {
  EXPECT_NEAR(drift_qber(params(103.6 * ps, 1000 * ps, 1000 * ps)), 0.5, 0.02);
}

TEST(Inversion, BracketsTheThreshold) {
  const QberParams p = params(103.6 * ps, 0.0, 300 * ps);
  const double d = invert_drift_for_threshold(1e-3, p);
  QberParams lo = p, hi = p;
  lo.drift_product = d;
  hi.drift_product = d + 0.5 * ps;
  EXPECT_LE(drift_qber(lo), 1e-3);
  EXPECT_GT(drift_qber(hi), 1e-3);
}

TEST(Inversion, DecreasesWithDistanceAndWindow) {
  double prev_w = 2e-9;
  for (double w : {300 * ps, 500 * ps, 700 * ps}) {
    const double d = invert_drift_for_threshold(1e-3, params(60 * ps, 0.0, w));
    EXPECT_LT(d, prev_w);
    prev_w = d;
  }
  double prev_s = 2e-9;
  for (double sigma : {40 * ps, 70 * ps, 103.6 * ps}) {
    const double d = invert_drift_for_threshold(1e-3, params(sigma, 0.0, 300 * ps));
    EXPECT_LT(d, prev_s);
    prev_s = d;
  }
}

TEST(Inversion, UnreachableThresholdThrows) {
  EXPECT_THROW(invert_drift_for_threshold(1e-3, params(400 * ps, 0.0, 1000 * ps)), NumericalError);
}

TEST(TotalPdf, AveragesEarlyAndLate) {
  const ArrivalPdf e = drift_pdf_grid(50 * ps, 0.0, 0.0, 500 * ps);
  const ArrivalPdf l = drift_pdf_grid(50 * ps, 0.0, 0.0, 1500 * ps);
  const ArrivalPdf t = total_pdf(e, l);
  EXPECT_NEAR(t.total_mass(), 1.0, 1e-9);
  EXPECT_NEAR(t.mean(), 1000 * ps, 1e-15);
}
