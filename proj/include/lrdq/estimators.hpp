#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lrdq/error.hpp"
#include "lrdq/numeric.hpp"
#include "lrdq/trace.hpp"

namespace lrdq {

enum class CountUnit { packets, bytes };

struct CountSeries {
  double bin_width = 1.0;
  std::vector<double> counts;
  CountUnit unit = CountUnit::packets;
};

/// Packets (or bytes) per bin [k w, (k+1) w) over the floor(duration / w)
/// complete bins. The last complete bin also takes arrivals exactly at its
/// right edge, so nothing is lost when the duration is a multiple of w.
inline CountSeries bin_counts(const PacketTrace& trace, double bin_width, CountUnit unit = CountUnit::packets) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw Error("bin width must be positive");
  if (trace.empty()) throw Error("cannot bin an empty trace");
  const double origin = trace[0].timestamp;
  const double span = trace.duration();
  const double exact = span / bin_width;
  const auto bins = static_cast<std::size_t>(std::floor(exact * (1.0 + 1e-12)));
  if (bins < 1)
    throw Error("bin width " + std::to_string(bin_width) + " leaves no complete bin in a trace of " +
                std::to_string(span) + " s");

  CountSeries out{bin_width, std::vector<double>(bins, 0.0), unit};
  for (const auto& r : trace) {
    auto k = static_cast<std::size_t>(std::floor((r.timestamp - origin) / bin_width));
    if (k >= bins) {
      if ((r.timestamp - origin) > static_cast<double>(bins) * bin_width * (1.0 + 1e-12)) continue;
      k = bins - 1;
    }
    out.counts[k] += unit == CountUnit::packets ? 1.0 : static_cast<double>(r.size);
  }
  return out;
}

/// Sums of consecutive blocks of `level` values; a trailing partial block is dropped.
inline std::vector<double> aggregate_sums(std::span<const double> values, std::size_t level) {
  if (level < 1) throw Error("aggregation level must be >= 1");
  std::vector<double> out(values.size() / level);
  for (std::size_t b = 0; b < out.size(); ++b) {
    CompensatedSum s;
    for (std::size_t j = 0; j < level; ++j) s += values[b * level + j];
    out[b] = s.value();
  }
  return out;
}

inline std::vector<double> aggregate(std::span<const double> values, std::size_t level) {
  auto out = aggregate_sums(values, level);
  for (auto& v : out) v /= static_cast<double>(level);
  return out;
}

inline double sample_mean(std::span<const double> v) {
  CompensatedSum s;
  for (double x : v) s += x;
  return s.value() / static_cast<double>(v.size());
}

/// Sample variance with the n - 1 denominator.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = sample_mean(v);
  CompensatedSum s;
  for (double x : v) s += (x - mean) * (x - mean);
  return s.value() / static_cast<double>(v.size() - 1);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("least squares needs at least two points");
  const double mx = sample_mean(x);
  const double my = sample_mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error("least squares needs distinct abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

enum class EstimateStatus { ok, out_of_range, degenerate };

inline const char* to_string(EstimateStatus s) {
  switch (s) {
    case EstimateStatus::ok: return "ok";
    case EstimateStatus::out_of_range: return "out_of_range";
    case EstimateStatus::degenerate: return "degenerate";
  }
  return "?";
}

struct HurstEstimate {
  double H = std::numeric_limits<double>::quiet_NaN();
  double slope = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> levels_used;
  /// Variance of the block means at each entry of levels_used.
  std::vector<double> variances;
  double fit_r2 = std::numeric_limits<double>::quiet_NaN();
  EstimateStatus status = EstimateStatus::degenerate;
};

/// Powers of two from 1 to length / 8.
inline std::vector<std::size_t> default_aggregation_levels(std::size_t length) {
  std::vector<std::size_t> levels;
  for (std::size_t a = 1; a <= length / 8; a *= 2) levels.push_back(a);
  return levels;
}

/// Aggregated-variance Hurst estimate: the variance of block means scales as
/// a^(2H - 2), so H = 1 + slope / 2 in log-log coordinates. Levels whose
/// variance is zero are dropped; fewer than four usable levels marks the
/// estimate degenerate.
inline HurstEstimate hurst_aggregated_variance(const CountSeries& series, std::span<const std::size_t> levels) {
  if (levels.size() < 4) throw Error("aggregated variance needs at least 4 aggregation levels");
  const std::size_t n = series.counts.size();
  for (auto a : levels) {
    if (a < 1) throw Error("aggregation levels must be >= 1");
    if (n / a < 8)
      throw Error("level " + std::to_string(a) + " leaves fewer than 8 blocks in a series of " +
                  std::to_string(n));
  }

  HurstEstimate est;
  std::vector<double> log_level;
  std::vector<double> log_var;
  for (auto a : levels) {
    const double v = sample_variance(aggregate(series.counts, a));
    if (!(v > 0.0)) continue;
    est.levels_used.push_back(a);
    est.variances.push_back(v);
    log_level.push_back(std::log(static_cast<double>(a)));
    log_var.push_back(std::log(v));
  }
  if (est.levels_used.size() < 4) {
    est.status = EstimateStatus::degenerate;
    return est;
  }
  const auto fit = least_squares(log_level, log_var);
  est.slope = fit.slope;
  est.H = 1.0 + fit.slope / 2.0;
  est.fit_r2 = fit.r2;
  est.status = (est.H > 0.0 && est.H < 1.0) ? EstimateStatus::ok : EstimateStatus::out_of_range;
  return est;
}

inline HurstEstimate hurst_aggregated_variance(const CountSeries& series) {
  const auto levels = default_aggregation_levels(series.counts.size());
  return hurst_aggregated_variance(series, levels);
}

struct CcdfPoint {
  double x = 0.0;
  /// Fraction of samples strictly greater than x.
  double survival = 0.0;
};

/// Empirical survival function at each distinct sample value; the maximum
/// (survival 0) is omitted.
inline std::vector<CcdfPoint> empirical_ccdf(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::vector<CcdfPoint> out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size();) {
    std::size_t j = i;
    while (j < samples.size() && samples[j] == samples[i]) ++j;
    const double greater = static_cast<double>(samples.size() - j);
    if (greater > 0.0) out.push_back({samples[i], greater / n});
    i = j;
  }
  return out;
}

struct TailFit {
  double alpha_hat = 0.0;
  double x_lo = 0.0;
  double x_hi = 0.0;
  double fit_r2 = 0.0;
  std::size_t samples_in_range = 0;
  /// Tail index fitted separately on the lower and upper halves (in log x) of the range.
  double alpha_lower_half = 0.0;
  double alpha_upper_half = 0.0;
  /// r2 below 0.99 or halves disagreeing by more than 10% of alpha_hat.
  bool unstable = false;
};

/// Log-log least-squares fit of the empirical CCDF over [x_lo, x_hi].
inline TailFit fit_tail_index(std::span<const double> samples, double x_lo, double x_hi) {
  if (!(x_lo > 0.0) || !(x_hi > x_lo)) throw Error("tail fit range must satisfy 0 < x_lo < x_hi");
  std::size_t in_range = 0;
  for (double x : samples) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error("tail samples must be positive and finite");
    if (x >= x_lo && x <= x_hi) ++in_range;
  }
  if (in_range < 100)
    throw Error("tail fit needs at least 100 samples in range, found " + std::to_string(in_range));

  const auto ccdf = empirical_ccdf({samples.begin(), samples.end()});
  std::vector<double> lx, ly;
  for (const auto& p : ccdf) {
    if (p.x < x_lo || p.x > x_hi) continue;
    lx.push_back(std::log(p.x));
    ly.push_back(std::log(p.survival));
  }
  if (lx.size() < 4) throw Error("tail fit range holds too few distinct sample values");

  TailFit fit;
  fit.x_lo = x_lo;
  fit.x_hi = x_hi;
  fit.samples_in_range = in_range;
  const auto all = least_squares(lx, ly);
  fit.alpha_hat = -all.slope;
  fit.fit_r2 = all.r2;

  const double mid = 0.5 * (std::log(x_lo) + std::log(x_hi));
  std::vector<double> lo_x, lo_y, hi_x, hi_y;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    auto& xs = lx[i] <= mid ? lo_x : hi_x;
    auto& ys = lx[i] <= mid ? lo_y : hi_y;
    xs.push_back(lx[i]);
    ys.push_back(ly[i]);
  }
  if (lo_x.size() >= 2 && hi_x.size() >= 2) {
    fit.alpha_lower_half = -least_squares(lo_x, lo_y).slope;
    fit.alpha_upper_half = -least_squares(hi_x, hi_y).slope;
  } else {
    fit.alpha_lower_half = fit.alpha_upper_half = fit.alpha_hat;
  }
  fit.unstable = fit.fit_r2 < 0.99 ||
                 std::fabs(fit.alpha_upper_half - fit.alpha_lower_half) > 0.1 * std::fabs(fit.alpha_hat);
  if (!(fit.alpha_hat > 0.0)) fit.unstable = true;
  return fit;
}

/// Value at quantile p of the samples (nearest rank).
inline double empirical_quantile(std::vector<double> samples, double p) {
  if (samples.empty()) throw Error("quantile of an empty sample");
  std::sort(samples.begin(), samples.end());
  const auto k = static_cast<std::size_t>(std::clamp(std::ceil(p * samples.size()), 1.0,
                                                     static_cast<double>(samples.size())));
  return samples[k - 1];
}

/// Sample autocorrelation at `lag` (biased estimator, divides by n).
inline double autocorrelation(std::span<const double> v, std::size_t lag) {
  if (lag >= v.size()) throw Error("lag exceeds series length");
  const double mean = sample_mean(v);
  CompensatedSum num, den;
  for (std::size_t i = 0; i < v.size(); ++i) {
    den += (v[i] - mean) * (v[i] - mean);
    if (i + lag < v.size()) num += (v[i] - mean) * (v[i + lag] - mean);
  }
  if (!(den.value() > 0.0)) throw Error("autocorrelation of a constant series");
  return num.value() / den.value();
}

/// Bartlett standard error of the lag-k sample autocorrelation under the
/// hypothesis that correlations vanish beyond lag k - 1.
inline double bartlett_standard_error(std::span<const double> v, std::size_t lag) {
  double s = 1.0;
  for (std::size_t j = 1; j < lag; ++j) {
    const double r = autocorrelation(v, j);
    s += 2.0 * r * r;
  }
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace lrdq
