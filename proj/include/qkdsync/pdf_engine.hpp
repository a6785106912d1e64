#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"
#include "physics.hpp"
#include "units.hpp"

namespace qkdsync {

struct PdfMeta {
  double drift_product = 0.0;  // t_drift * T_int
  double t_0 = 0.0;
  double sigma = 0.0;
  double bin_center = 0.0;
  std::optional<SpadModel> spad;
};

/// Density sampled on the uniform grid t_i = i * step, i = first_index ...
/// Values are interpreted as a piecewise-linear function that is zero outside
/// the stored range (unfolded) or periodic with `period` (folded, first_index
/// is then 0 and size() * step == period).
class ArrivalPdf {
 public:
  ArrivalPdf() = default;
  ArrivalPdf(std::int64_t first_index, double step, std::vector<double> density)
      : first_(first_index), step_(step), density_(std::move(density)) {}

  static ArrivalPdf make_folded(double step, std::vector<double> density) {
    ArrivalPdf p(0, step, std::move(density));
    p.folded_ = true;
    p.period_ = step * static_cast<double>(p.density_.size());
    return p;
  }

  std::int64_t first_index() const { return first_; }
  std::int64_t last_index() const { return first_ + static_cast<std::int64_t>(density_.size()) - 1; }
  double step() const { return step_; }
  bool folded() const { return folded_; }
  double period() const { return period_; }
  std::size_t size() const { return density_.size(); }
  const std::vector<double>& density() const { return density_; }
  double time(std::size_t k) const { return static_cast<double>(first_ + static_cast<std::int64_t>(k)) * step_; }
  double front_time() const { return static_cast<double>(first_) * step_; }
  double back_time() const { return static_cast<double>(last_index()) * step_; }

  PdfMeta meta;

  /// Density at global grid index i.
  double at(std::int64_t i) const {
    if (folded_) return density_[static_cast<std::size_t>(numeric::wrap_index(i, static_cast<std::int64_t>(density_.size())))];
    if (i < first_ || i > last_index()) return 0.0;
    return density_[static_cast<std::size_t>(i - first_)];
  }

  /// Linear interpolation.
  double operator()(double t) const {
    const double x = t / step_;
    const double fl = std::floor(x);
    const auto i = static_cast<std::int64_t>(fl);
    const double f = x - fl;
    return (1.0 - f) * at(i) + f * at(i + 1);
  }

  double total_mass() const {
    double s = 0.0;
    for (double d : density_) s += d;
    if (!folded_ && !density_.empty()) s -= 0.5 * (density_.front() + density_.back());
    return s * step_;
  }

  /// Exact integral of the piecewise-linear interpolant over [a, b).
  double integrate(double a, double b) const {
    if (!(b > a) || density_.empty()) return 0.0;
    double x0 = a / step_;
    double x1 = b / step_;
    if (!folded_) {
      x0 = std::max(x0, static_cast<double>(first_));
      x1 = std::min(x1, static_cast<double>(last_index()));
      if (!(x1 > x0)) return 0.0;
    }
    const auto i0 = static_cast<std::int64_t>(std::floor(x0));
    const auto i1 = static_cast<std::int64_t>(std::floor(x1));
    double acc = 0.0;
    for (std::int64_t i = i0; i <= i1; ++i) {
      const double u = std::max(x0 - static_cast<double>(i), 0.0);
      const double v = std::min(x1 - static_cast<double>(i), 1.0);
      if (!(v > u)) continue;
      const double di = at(i);
      const double dj = at(i + 1);
      acc += (v - u) * di + 0.5 * (v * v - u * u) * (dj - di);
    }
    return acc * step_;
  }

  /// Trapezoid mean on the stored grid (folded: over [0, period)).
  double mean() const {
    const double m = total_mass();
    double s = 0.0;
    for (std::size_t k = 0; k < density_.size(); ++k) s += time(k) * density_[k];
    if (!folded_ && !density_.empty())
      s -= 0.5 * (time(0) * density_.front() + time(density_.size() - 1) * density_.back());
    return s * step_ / m;
  }

  double variance() const {
    const double m = total_mass();
    const double mu = mean();
    double s = 0.0;
    for (std::size_t k = 0; k < density_.size(); ++k) {
      const double d = time(k) - mu;
      s += d * d * density_[k];
    }
    return s * step_ / m;
  }

  double stddev() const { return std::sqrt(variance()); }

  /// (1/mass) * integral of p(t) exp(2 pi i t / period_c) dt.
  std::complex<double> fourier(double period_c) const {
    const double k = units::two_pi / period_c;
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t j = 0; j < density_.size(); ++j) acc += density_[j] * std::polar(1.0, k * time(j));
    return acc * step_ / total_mass();
  }

 private:
  std::int64_t first_ = 0;
  double step_ = 0.5 * units::ps;
  std::vector<double> density_;
  bool folded_ = false;
  double period_ = 0.0;
};

struct FilterWindow {
  double center = 0.5 * units::ns;
  double width = 1.0 * units::ns;

  double lo() const { return center - 0.5 * width; }
  double hi() const { return center + 0.5 * width; }
};

inline constexpr double kDefaultGridStep = 0.5 * units::ps;

/// Start-stop delay density for one time bin; drift_product = t_drift * T_int.
inline double drift_pdf(double sigma, double drift_product, double t_0, double bin_center,
                        double t) {
  const double c = bin_center + t_0 + 0.5 * drift_product;
  const double h = 0.5 * std::abs(drift_product);
  if (h < 0.5e-4 * sigma) return numeric::normal_pdf((t - c) / sigma) / sigma;
  return numeric::normal_cdf_diff((c - h - t) / sigma, (c + h - t) / sigma) / (2.0 * h);
}

inline double drift_pdf(double sigma, double t_drift, double t_int, double t_0, double bin_center,
                        double t) {
  return drift_pdf(sigma, t_drift * t_int, t_0, bin_center, t);
}

inline double drift_pdf_mean(double drift_product, double t_0, double bin_center) {
  return 0.5 * drift_product + t_0 + bin_center;
}

inline double drift_pdf_stddev(double sigma, double drift_product) {
  return std::sqrt(sigma * sigma + drift_product * drift_product / 12.0);
}

inline double spad_total_stddev(double sigma, double drift_product, const SpadModel& spad) {
  return std::sqrt(sigma * sigma + drift_product * drift_product / 12.0 + spad.variance());
}

/// Samples drift_pdf on the step grid over +-10 sigma around the smear.
inline ArrivalPdf drift_pdf_grid(double sigma, double drift_product, double t_0, double bin_center,
                                 double step = kDefaultGridStep) {
  detail::require(sigma > 0.0, "sigma must be positive");
  detail::require(step > 0.0, "grid step must be positive");
  const double c = bin_center + t_0 + 0.5 * drift_product;
  const double h = 0.5 * std::abs(drift_product);
  const auto lo = static_cast<std::int64_t>(std::floor((c - h - 10.0 * sigma) / step));
  const auto hi = static_cast<std::int64_t>(std::ceil((c + h + 10.0 * sigma) / step));
  std::vector<double> d(static_cast<std::size_t>(hi - lo + 1));
  for (std::int64_t i = lo; i <= hi; ++i)
    d[static_cast<std::size_t>(i - lo)] = drift_pdf(sigma, drift_product, t_0, bin_center, static_cast<double>(i) * step);
  ArrivalPdf p(lo, step, std::move(d));
  p.meta.drift_product = drift_product;
  p.meta.t_0 = t_0;
  p.meta.sigma = sigma;
  p.meta.bin_center = bin_center;
  return p;
}

/// Kernel samples on the grid, normalized so that step * sum == 1.
inline ArrivalPdf sample_spad_kernel(const SpadModel& spad, double step) {
  const double loc = spad.location();
  const double w = spad.skew_scale;
  const auto lo = static_cast<std::int64_t>(std::floor((loc - 10.0 * w) / step));
  const auto hi = static_cast<std::int64_t>(std::ceil((loc + 10.0 * w) / step));
  std::vector<double> k(static_cast<std::size_t>(hi - lo + 1));
  double peak = 0.0;
  for (std::int64_t i = lo; i <= hi; ++i) {
    const double v = spad_kernel(spad, static_cast<double>(i) * step);
    k[static_cast<std::size_t>(i - lo)] = v;
    peak = std::max(peak, v);
  }
  std::size_t b = 0;
  std::size_t e = k.size();
  while (b < e && k[b] < 1e-18 * peak) ++b;
  while (e > b && k[e - 1] < 1e-18 * peak) --e;
  std::vector<double> trimmed(k.begin() + static_cast<std::ptrdiff_t>(b), k.begin() + static_cast<std::ptrdiff_t>(e));
  double sum = 0.0;
  for (double v : trimmed) sum += v;
  for (double& v : trimmed) v /= sum * step;
  return ArrivalPdf(lo + static_cast<std::int64_t>(b), step, std::move(trimmed));
}

inline ArrivalPdf convolve_spad(const ArrivalPdf& pdf, const SpadModel& spad) {
  if (pdf.folded()) throw ConfigError("convolve_spad: pdf must be unfolded");
  spad.validate();
  const double step = pdf.step();
  if (spad.skew_scale < 2.0 * step) {
    ArrivalPdf out = pdf;
    out.meta.spad = spad;
    return out;
  }
  const ArrivalPdf k = sample_spad_kernel(spad, step);
  const auto& a = pdf.density();
  const auto& b = k.density();
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i] * step;
    if (ai == 0.0) continue;
    double* o = out.data() + i;
    for (std::size_t j = 0; j < b.size(); ++j) o[j] += ai * b[j];
  }
  ArrivalPdf r(pdf.first_index() + k.first_index(), step, std::move(out));
  r.meta = pdf.meta;
  r.meta.spad = spad;
  return r;
}

inline ArrivalPdf total_pdf(const ArrivalPdf& early, const ArrivalPdf& late) {
  if (early.step() != late.step()) throw ConfigError("total_pdf: grid step mismatch");
  if (early.folded() != late.folded()) throw ConfigError("total_pdf: folded flag mismatch");
  if (early.folded() && early.size() != late.size()) throw ConfigError("total_pdf: period mismatch");
  const std::int64_t lo = std::min(early.first_index(), late.first_index());
  const std::int64_t hi = std::max(early.last_index(), late.last_index());
  std::vector<double> d(static_cast<std::size_t>(hi - lo + 1));
  for (std::int64_t i = lo; i <= hi; ++i)
    d[static_cast<std::size_t>(i - lo)] = 0.5 * (early.at(i) + late.at(i));
  ArrivalPdf out = early.folded() ? ArrivalPdf::make_folded(early.step(), std::move(d))
                                  : ArrivalPdf(lo, early.step(), std::move(d));
  out.meta = early.meta;
  return out;
}

/// Folds over `period` using shifts m in [m_min, m_max]; throws when the mass
/// outside the span exceeds 1e-9.
inline ArrivalPdf fold(const ArrivalPdf& pdf, double period, std::int64_t m_min, std::int64_t m_max) {
  if (pdf.folded()) throw ConfigError("fold: pdf already folded");
  std::int64_t n = 0;
  if (!numeric::is_integer_ratio(period, pdf.step(), &n))
    throw ConfigError("fold: period must be an integer multiple of the grid step");
  std::vector<double> d(static_cast<std::size_t>(n), 0.0);
  double outside = 0.0;
  const double total = pdf.total_mass();
  for (std::size_t k = 0; k < pdf.size(); ++k) {
    const std::int64_t i = pdf.first_index() + static_cast<std::int64_t>(k);
    const std::int64_t m = (i >= 0) ? i / n : -((-i + n - 1) / n);
    const double v = pdf.density()[k];
    if (m < m_min || m > m_max) {
      outside += v * pdf.step();
      continue;
    }
    d[static_cast<std::size_t>(i - m * n)] += v;
  }
  if (outside > 1e-9 * total)
    throw NumericalError("fold: m span [" + std::to_string(m_min) + ", " + std::to_string(m_max) +
                         "] misses mass " + std::to_string(outside));
  ArrivalPdf out = ArrivalPdf::make_folded(pdf.step(), std::move(d));
  out.meta = pdf.meta;
  return out;
}

/// Folds with the span chosen from the pdf support.
inline ArrivalPdf fold(const ArrivalPdf& pdf, double period) {
  const auto m_lo = static_cast<std::int64_t>(std::floor(pdf.front_time() / period));
  const auto m_hi = static_cast<std::int64_t>(std::floor(pdf.back_time() / period));
  return fold(pdf, period, m_lo, m_hi);
}

inline double leakage_probability(const ArrivalPdf& folded_pdf, const FilterWindow& window) {
  if (!folded_pdf.folded()) throw ConfigError("leakage_probability: pdf must be folded");
  return folded_pdf.integrate(window.lo(), window.hi());
}

struct QberParams {
  double sigma = 0.0;
  std::optional<SpadModel> spad;
  double drift_product = 0.0;
  double window = 1.0 * units::ns;
  double t_bin = 1.0 * units::ns;
  double step = kDefaultGridStep;

  void validate() const {
    detail::require(sigma > 0.0, "sigma must be positive");
    detail::require(t_bin > 0.0, "t_bin must be positive");
    detail::require(window > 0.0 && window <= t_bin, "window must be in (0, t_bin]");
  }

  FilterWindow early_window() const { return {0.5 * t_bin, window}; }
  FilterWindow late_window() const { return {1.5 * t_bin, window}; }
};

/// Early-bin lobe, SPAD-convolved, folded over 2 T_bin.
inline ArrivalPdf folded_lobe(const QberParams& p, double bin_center, double t_0 = 0.0) {
  ArrivalPdf lobe = drift_pdf_grid(p.sigma, p.drift_product, t_0, bin_center, p.step);
  if (p.spad) lobe = convolve_spad(lobe, *p.spad);
  return fold(lobe, 2.0 * p.t_bin);
}

/// Window masses of the early lobe: correct (early window) and wrong (late).
struct LobeMasses {
  double correct = 0.0;
  double wrong = 0.0;
};

inline LobeMasses lobe_masses(const QberParams& p) {
  p.validate();
  const ArrivalPdf f = folded_lobe(p, 0.5 * p.t_bin);
  return {leakage_probability(f, p.early_window()), leakage_probability(f, p.late_window())};
}

/// Drift QBER using early/late symmetry of the folded lobes.
inline double drift_qber(const QberParams& p) {
  const LobeMasses m = lobe_masses(p);
  const double denom = m.correct + m.wrong;
  if (!(denom > 0.0)) throw NumericalError("drift_qber: no mass inside the windows");
  return m.wrong / denom;
}

/// Same quantity from both lobes explicitly (equal early/late proportion).
inline double drift_qber_both_lobes(const QberParams& p) {
  p.validate();
  const ArrivalPdf e = folded_lobe(p, 0.5 * p.t_bin);
  const ArrivalPdf l = folded_lobe(p, 1.5 * p.t_bin);
  const double ee = leakage_probability(e, p.early_window());
  const double le = leakage_probability(e, p.late_window());
  const double ll = leakage_probability(l, p.late_window());
  const double el = leakage_probability(l, p.early_window());
  return (le + el) / (ee + le + ll + el);
}

/// Largest drift product in [0, t_bin] with drift_qber <= threshold, by
/// bisection to 0.5 ps.
inline double invert_drift_for_threshold(double threshold, QberParams p,
                                         double tolerance = 0.5 * units::ps) {
  detail::require(threshold > 0.0 && threshold < 0.5, "threshold must be in (0, 0.5)");
  p.drift_product = 0.0;
  if (drift_qber(p) > threshold)
    throw NumericalError("invert_drift_for_threshold: threshold unreachable at zero drift");
  double lo = 0.0;
  double hi = p.t_bin;
  p.drift_product = hi;
  if (drift_qber(p) <= threshold) return hi;
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    p.drift_product = mid;
    if (drift_qber(p) <= threshold)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace qkdsync
