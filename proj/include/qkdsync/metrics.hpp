#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"

namespace qkdsync {

enum class SeriesKind { center, drift, qber, qber_filtered };

inline const char* to_string(SeriesKind k) {
  switch (k) {
    case SeriesKind::center: return "center";
    case SeriesKind::drift: return "drift";
    case SeriesKind::qber: return "qber";
    case SeriesKind::qber_filtered: return "qber_filtered";
  }
  return "?";
}

struct TimeSeries {
  std::vector<double> timestamps;
  std::vector<double> values;
  SeriesKind kind = SeriesKind::center;

  void validate() const {
    detail::require(timestamps.size() == values.size(), "series timestamps and values differ in length");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
      detail::require(timestamps[i] > timestamps[i - 1], "series timestamps must be strictly increasing");
  }
};

struct TdevPoint {
  double tau = 0.0;
  double tdev = 0.0;
};

/// Overlapping TDEV at tau = n * tau0 from phase samples x (no detrending):
/// TDEV^2 = 1/(6 n^2 (N-3n+1)) * sum_j (sum_{i=j}^{j+n-1} x[i+2n] - 2x[i+n] + x[i])^2.
inline double tdev_at(const std::vector<double>& x, std::size_t n) {
  const std::size_t len = x.size();
  if (n == 0 || len < 3 * n + 1)
    throw ConfigError("tdev: need at least 3n+1 samples for n=" + std::to_string(n));
  const std::size_t terms = len - 3 * n + 1;
  // Inner sum for j = 0, then slide.
  double inner = 0.0;
  for (std::size_t i = 0; i < n; ++i) inner += x[i + 2 * n] - 2.0 * x[i + n] + x[i];
  double acc = inner * inner;
  for (std::size_t j = 1; j < terms; ++j) {
    const std::size_t out = j - 1;
    const std::size_t in = j + n - 1;
    inner += (x[in + 2 * n] - 2.0 * x[in + n] + x[in]) - (x[out + 2 * n] - 2.0 * x[out + n] + x[out]);
    acc += inner * inner;
  }
  const double nn = static_cast<double>(n);
  return std::sqrt(acc / (6.0 * nn * nn * static_cast<double>(terms)));
}

/// TDEV for each requested tau; taus must be positive multiples of the
/// series spacing tau0.
inline std::vector<TdevPoint> tdev(const TimeSeries& series, const std::vector<double>& taus) {
  series.validate();
  detail::require(series.values.size() >= 2, "tdev: need at least two samples");
  const double tau0 = series.timestamps[1] - series.timestamps[0];
  const double span = series.timestamps.back() - series.timestamps.front();
  for (std::size_t i = 1; i < series.timestamps.size(); ++i)
    detail::require(std::abs(series.timestamps[i] - series.timestamps[i - 1] - tau0) <= 1e-6 * tau0 + 1e-9 * span,
                    "tdev: series must be uniformly spaced");
  std::vector<TdevPoint> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    const double r = tau / tau0;
    const auto n = static_cast<std::size_t>(std::llround(r));
    detail::require(n >= 1 && std::abs(r - static_cast<double>(n)) <= 1e-6 * r, "tdev: tau must be a multiple of tau0");
    out.push_back({static_cast<double>(n) * tau0, tdev_at(series.values, n)});
  }
  return out;
}

/// Octave-spaced multiples 1, 2, 4, ... of tau0 that still have 3n+1 samples.
inline std::vector<double> octave_taus(double tau0, std::size_t samples) {
  std::vector<double> taus;
  for (std::size_t n = 1; 3 * n + 1 <= samples; n *= 2) taus.push_back(static_cast<double>(n) * tau0);
  return taus;
}

struct SeriesSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
  bool std_defined = true;  // false for a single sample
};

inline SeriesSummary summarize(const std::vector<double>& values) {
  detail::require(!values.empty(), "summarize: empty series");
  SeriesSummary s;
  s.count = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2) {
    s.std_defined = false;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return s;
}

inline SeriesSummary summarize(const TimeSeries& series) { return summarize(series.values); }

/// Centered boxcar average over `window` seconds, shrinking at the edges.
inline TimeSeries moving_average(const TimeSeries& series, double window) {
  series.validate();
  TimeSeries out;
  out.kind = series.kind;
  out.timestamps = series.timestamps;
  out.values.resize(series.values.size());
  const std::size_t n = series.values.size();
  if (n == 0) return out;
  if (n >= 2) {
    const double spacing = series.timestamps[1] - series.timestamps[0];
    detail::require(window > spacing, "moving_average: window must exceed the sample spacing");
  }
  const double half = 0.5 * window;
  std::size_t lo = 0;
  std::size_t hi = 0;  // exclusive
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = series.timestamps[i];
    while (hi < n && series.timestamps[hi] <= t + half) sum += series.values[hi++];
    while (series.timestamps[lo] < t - half) sum -= series.values[lo++];
    out.values[i] = sum / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace qkdsync
