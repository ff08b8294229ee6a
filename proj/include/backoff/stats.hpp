#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "backoff/rng.hpp"

namespace backoff {

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Linear-interpolation quantile (R type 7) of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw StatsError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  return quantile_sorted(samples, 0.5);
}

struct OutlierSplit {
  std::vector<double> kept;  // original order preserved
  std::size_t outliers = 0;
};

/// Drops every point farther than 1.5 * IQR from the median.
inline OutlierSplit drop_outliers(std::span<const double> samples) {
  OutlierSplit out;
  if (samples.empty()) return out;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double med = quantile_sorted(sorted, 0.5);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  for (double x : samples) {
    if (std::abs(x - med) > 1.5 * iqr) {
      ++out.outliers;
    } else {
      out.kept.push_back(x);
    }
  }
  return out;
}

inline constexpr std::size_t kBootstrapResamples = 2000;

/// 95% bootstrap percentile interval for the median. The interval is
/// widened if needed so that it always contains the sample median.
inline std::pair<double, double> ci_95(std::span<const double> samples, std::uint64_t seed,
                                       std::size_t resamples = kBootstrapResamples) {
  if (samples.size() < 2) throw StatsError("ci_95 needs at least 2 samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double med = quantile_sorted(sorted, 0.5);

  Rng rng(seed);
  std::vector<double> medians;
  medians.reserve(resamples);
  std::vector<double> draw(sorted.size());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (double& x : draw) x = sorted[rng.below(sorted.size())];
    std::sort(draw.begin(), draw.end());
    medians.push_back(quantile_sorted(draw, 0.5));
  }
  std::sort(medians.begin(), medians.end());
  const double lo = quantile_sorted(medians, 0.025);
  const double hi = quantile_sorted(medians, 0.975);
  return {std::min(lo, med), std::max(hi, med)};
}

struct Summary {
  double median = 0;
  double lo = 0;
  double hi = 0;
  std::size_t trials = 0;
  std::size_t outliers = 0;
};

/// Outlier removal, then median and bootstrap CI of what is left. With
/// fewer than two surviving points the interval collapses to the median.
inline Summary summarize(std::span<const double> samples, std::uint64_t seed) {
  if (samples.empty()) throw StatsError("summarize of empty sample");
  Summary s;
  s.trials = samples.size();
  OutlierSplit split = drop_outliers(samples);
  s.outliers = split.outliers;
  s.median = median(split.kept);
  if (split.kept.size() >= 2) {
    std::tie(s.lo, s.hi) = ci_95(split.kept, seed);
  } else {
    s.lo = s.hi = s.median;
  }
  return s;
}

/// 100 * (a - b) / b.
inline double percent_delta(double a, double baseline) {
  if (!(baseline > 0.0)) throw StatsError("percent_delta needs a positive baseline");
  return 100.0 * (a - baseline) / baseline;
}

enum class Axis : std::uint8_t { Linear, Log10 };

struct TrendFit {
  std::string name;
  Axis axis = Axis::Linear;
  double slope = 0;
  double intercept = 0;
  double slope_stderr = 0;
  double slope_ci_lo = 0;  // 95%
  double slope_ci_hi = 0;
  std::optional<double> crossing;  // x where the series passes 1, in original units

  bool slope_indistinguishable_from_zero() const noexcept {
    return slope_ci_lo <= 0.0 && 0.0 <= slope_ci_hi;
  }
};

/// Least-squares line through (axis(x), y) with a t-based 95% interval on
/// the slope, plus the first point where y crosses 1 (linear interpolation
/// on the fitted axis between the two bracketing points).
inline TrendFit fit_trend(std::span<const double> xs, std::span<const double> ys,
                          Axis axis = Axis::Linear, std::string name = {}) {
  if (xs.size() != ys.size()) throw StatsError("fit_trend: x and y lengths differ");
  if (xs.size() < 4) throw StatsError("fit_trend needs at least 4 points");

  std::vector<double> u(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (axis == Axis::Log10 && !(xs[i] > 0)) throw StatsError("fit_trend: log axis needs x > 0");
    u[i] = axis == Axis::Log10 ? std::log10(xs[i]) : xs[i];
  }

  const auto m = static_cast<double>(u.size());
  double mean_u = 0, mean_y = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mean_u += u[i];
    mean_y += ys[i];
  }
  mean_u /= m;
  mean_y /= m;
  double suu = 0, suy = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suu += (u[i] - mean_u) * (u[i] - mean_u);
    suy += (u[i] - mean_u) * (ys[i] - mean_y);
  }
  if (suu == 0) throw StatsError("fit_trend: x values are all equal");

  TrendFit fit;
  fit.name = std::move(name);
  fit.axis = axis;
  fit.slope = suy / suu;
  fit.intercept = mean_y - fit.slope * mean_u;
  double sse = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * u[i]);
    sse += r * r;
  }
  const double dof = m - 2;
  fit.slope_stderr = std::sqrt(sse / dof / suu);
  const double t = boost::math::quantile(boost::math::students_t(dof), 0.975);
  fit.slope_ci_lo = fit.slope - t * fit.slope_stderr;
  fit.slope_ci_hi = fit.slope + t * fit.slope_stderr;

  for (std::size_t i = 0; i + 1 < u.size(); ++i) {
    const double a = ys[i] - 1.0, b = ys[i + 1] - 1.0;
    if (a == 0 && b == 0) continue;
    if (a == 0 || a * b < 0) {
      const double frac = a / (a - b);
      const double at = u[i] + frac * (u[i + 1] - u[i]);
      fit.crossing = axis == Axis::Log10 ? std::pow(10.0, at) : at;
      break;
    }
  }
  return fit;
}

}  // namespace backoff
