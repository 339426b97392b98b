#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stochred/error.hpp"

namespace stochred {

/// Bin-counted density on equal-width bins.
struct DensityEstimate {
  Eigen::VectorXd bin_edges;  // B + 1
  Eigen::VectorXd pdf;        // B

  Eigen::Index bins() const noexcept { return pdf.size(); }
  Eigen::VectorXd centers() const {
    return 0.5 * (bin_edges.head(bins()) + bin_edges.tail(bins()));
  }
};

/// Values on a lag grid starting at zero.
struct CorrelationCurve {
  Eigen::VectorXd lags;
  Eigen::VectorXd values;
};

/// One row of the comparison tables: relative errors against the full model.
struct ErrorReport {
  double density_err = 0.0;
  double corr_err = 0.0;
  double cross_corr_err = 0.0;
  double energy_corr_err = 0.0;
};

inline constexpr int kDefaultBins = 200;
inline constexpr double kDefaultMaxLag = 10.0;

/// Density of all entries of `samples` pooled together.
inline DensityEstimate density(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                               int n_bins = kDefaultBins) {
  if (n_bins < 1) throw InvalidDimension("density needs at least one bin");
  if (samples.size() == 0) throw InsufficientData("density of an empty sample");
  if (!samples.allFinite()) throw DegenerateData("density of non-finite samples");
  const double lo = samples.minCoeff();
  const double hi = samples.maxCoeff();
  if (!(hi > lo)) throw DegenerateData("all samples are equal; the density has no support");

  DensityEstimate d;
  d.bin_edges = Eigen::VectorXd::LinSpaced(n_bins + 1, lo, hi);
  d.bin_edges[n_bins] = hi;
  const double width = (hi - lo) / n_bins;
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
      auto k = static_cast<long>(std::floor((samples(r, c) - lo) / width));
      k = std::clamp(k, 0L, static_cast<long>(n_bins - 1));
      ++counts[static_cast<std::size_t>(k)];
    }
  }
  const auto total = static_cast<double>(samples.size());
  d.pdf.resize(n_bins);
  for (int k = 0; k < n_bins; ++k) {
    d.pdf[k] = static_cast<double>(counts[static_cast<std::size_t>(k)]) /
               (total * (d.bin_edges[k + 1] - d.bin_edges[k]));
  }
  return d;
}

namespace detail {

inline std::size_t lag_steps_for(Eigen::Index rows, double dt_sample, double max_lag) {
  if (!(dt_sample > 0.0)) throw InvalidDimension("sample interval must be positive");
  if (!(max_lag >= 0.0)) throw InvalidDimension("max_lag must be non-negative");
  const auto steps = static_cast<std::size_t>(std::floor(max_lag / dt_sample + 1e-9));
  if (static_cast<std::size_t>(rows) < std::max<std::size_t>(2 * steps, 2)) {
    throw InsufficientData("series of " + std::to_string(rows) +
                           " samples is shorter than twice the maximum lag");
  }
  return steps;
}

// Time average over t of sum_i a(t + k, i) b(t, i) / n_cols, for each k.
inline Eigen::VectorXd lagged_products(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                       std::size_t steps) {
  const Eigen::Index m = a.rows();
  const auto cols = static_cast<double>(a.cols());
  Eigen::VectorXd out(static_cast<Eigen::Index>(steps + 1));
  for (std::size_t k = 0; k <= steps; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::Index n = m - kk;
    const double s = (a.bottomRows(n).array() * b.topRows(n).array()).sum();
    out[kk] = s / (static_cast<double>(n) * cols);
  }
  return out;
}

inline Eigen::VectorXd lag_grid(std::size_t steps, double dt_sample) {
  Eigen::VectorXd lags(static_cast<Eigen::Index>(steps + 1));
  for (std::size_t k = 0; k <= steps; ++k) {
    lags[static_cast<Eigen::Index>(k)] = static_cast<double>(k) * dt_sample;
  }
  return lags;
}

}  // namespace detail

/// Mean over components and time of the raw (uncentered) product
/// x_i(t) x_i(t+s), divided by its value at s = 0.
inline CorrelationCurve autocorrelation(const Eigen::MatrixXd& series, double dt_sample,
                                        double max_lag = kDefaultMaxLag) {
  const auto steps = detail::lag_steps_for(series.rows(), dt_sample, max_lag);
  const Eigen::VectorXd raw = detail::lagged_products(series, series, steps);
  if (!(raw[0] > 0.0)) throw DegenerateData("series has zero second moment");
  return {detail::lag_grid(steps, dt_sample), raw / raw[0]};
}

/// As autocorrelation, but pairing x_i(t) with x_{i+1}(t+s) (periodic),
/// still normalized by the pooled <x_i^2>.
inline CorrelationCurve cross_correlation(const Eigen::MatrixXd& series, double dt_sample,
                                          double max_lag = kDefaultMaxLag) {
  if (series.cols() < 2) throw InvalidDimension("cross-correlation needs at least 2 components");
  const auto steps = detail::lag_steps_for(series.rows(), dt_sample, max_lag);
  const Eigen::Index n = series.cols();
  Eigen::MatrixXd next(series.rows(), n);
  next.leftCols(n - 1) = series.rightCols(n - 1);
  next.col(n - 1) = series.col(0);
  const double second = detail::lagged_products(series, series, 0)[0];
  if (!(second > 0.0)) throw DegenerateData("series has zero second moment");
  return {detail::lag_grid(steps, dt_sample), detail::lagged_products(next, series, steps) / second};
}

/// K(s) = <x^2(t) x^2(t+s)> / (<x^2>^2 + 2 <x(t) x(t+s)>^2), raw moments
/// pooled over components. Identically 1 for a Gaussian process.
inline CorrelationCurve energy_autocorrelation(const Eigen::MatrixXd& series, double dt_sample,
                                               double max_lag = kDefaultMaxLag) {
  const auto steps = detail::lag_steps_for(series.rows(), dt_sample, max_lag);
  const Eigen::MatrixXd sq = series.array().square().matrix();
  const double second = sq.mean();
  if (!(second > 0.0)) throw DegenerateData("series has zero second moment");
  const Eigen::VectorXd cov = detail::lagged_products(series, series, steps);
  const Eigen::VectorXd fourth = detail::lagged_products(sq, sq, steps);
  CorrelationCurve c{detail::lag_grid(steps, dt_sample), Eigen::VectorXd(cov.size())};
  for (Eigen::Index k = 0; k < cov.size(); ++k) {
    c.values[k] = fourth[k] / (second * second + 2.0 * cov[k] * cov[k]);
  }
  return c;
}

/// Pooled mean of all entries (recorded because the moments are uncentered).
inline double pooled_mean(const Eigen::MatrixXd& series) { return series.mean(); }

namespace detail {

inline double interpolate(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double at) {
  const auto* begin = x.data();
  const auto* end = x.data() + x.size();
  const auto* it = std::lower_bound(begin, end, at);
  if (it == end) return y[x.size() - 1];
  const auto k = static_cast<Eigen::Index>(it - begin);
  if (*it == at || k == 0) return y[k];
  const double w = (at - x[k - 1]) / (x[k] - x[k - 1]);
  return (1.0 - w) * y[k - 1] + w * y[k];
}

}  // namespace detail

/// Relative discrete L2 error of `test` against `ref` on the reference lags,
/// with `test` linearly interpolated. Lags outside the test range are skipped.
inline double relative_error(const CorrelationCurve& test, const CorrelationCurve& ref) {
  if (test.lags.size() == 0 || ref.lags.size() == 0) throw InsufficientData("empty curve");
  const double lo = test.lags[0];
  const double hi = test.lags[test.lags.size() - 1];
  double num = 0.0, den = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index k = 0; k < ref.lags.size(); ++k) {
    const double s = ref.lags[k];
    if (s < lo || s > hi) continue;
    const double d = detail::interpolate(test.lags, test.values, s) - ref.values[k];
    num += d * d;
    den += ref.values[k] * ref.values[k];
    ++used;
  }
  if (used == 0) throw DegenerateData("curves have no lags in common");
  if (!(den > 0.0)) throw DegenerateData("reference curve is identically zero");
  return std::sqrt(num / den);
}

namespace detail {

inline double value_on_cell(const DensityEstimate& d, double a, double b) {
  const double mid = 0.5 * (a + b);
  const auto& e = d.bin_edges;
  if (mid < e[0] || mid > e[e.size() - 1]) return 0.0;
  const auto* it = std::upper_bound(e.data(), e.data() + e.size(), mid);
  auto k = static_cast<Eigen::Index>(it - e.data()) - 1;
  k = std::clamp<Eigen::Index>(k, 0, d.bins() - 1);
  return d.pdf[k];
}

}  // namespace detail

/// Sorted union of the bin edges of several densities.
inline Eigen::VectorXd union_grid(const std::vector<const DensityEstimate*>& ds) {
  std::vector<double> edges;
  for (const auto* d : ds) {
    edges.insert(edges.end(), d->bin_edges.data(), d->bin_edges.data() + d->bin_edges.size());
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return Eigen::Map<Eigen::VectorXd>(edges.data(), static_cast<Eigen::Index>(edges.size()));
}

/// Density of `d` on each cell of a union grid (0 outside its support).
inline Eigen::VectorXd rebin(const DensityEstimate& d, const Eigen::VectorXd& edges) {
  const Eigen::Index cells = edges.size() - 1;
  Eigen::VectorXd out(std::max<Eigen::Index>(cells, 0));
  for (Eigen::Index k = 0; k < cells; ++k) out[k] = detail::value_on_cell(d, edges[k], edges[k + 1]);
  return out;
}

/// Relative L2 error between densities, both re-binned onto the union of
/// their bin edges: (int (p - q)^2)^{1/2} / (int q^2)^{1/2}.
inline double relative_error(const DensityEstimate& test, const DensityEstimate& ref) {
  const double overlap_lo = std::max(test.bin_edges[0], ref.bin_edges[0]);
  const double overlap_hi =
      std::min(test.bin_edges[test.bin_edges.size() - 1], ref.bin_edges[ref.bin_edges.size() - 1]);
  if (!(overlap_hi > overlap_lo)) throw DegenerateData("densities have disjoint supports");
  const Eigen::VectorXd edges = union_grid({&test, &ref});
  const Eigen::VectorXd p = rebin(test, edges);
  const Eigen::VectorXd q = rebin(ref, edges);
  const Eigen::VectorXd w = edges.tail(p.size()) - edges.head(p.size());
  const double num = (w.array() * (p - q).array().square()).sum();
  const double den = (w.array() * q.array().square()).sum();
  return std::sqrt(num / den);
}

/// Number of local maxima whose topographic prominence is at least
/// `rel_prominence` times the global maximum. Plateaus count once.
inline int count_prominent_peaks(const Eigen::VectorXd& v, double rel_prominence = 0.1) {
  std::vector<double> y;  // runs of equal values collapsed
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (y.empty() || v[k] != y.back()) y.push_back(v[k]);
  }
  if (y.empty()) return 0;
  const double threshold = rel_prominence * *std::max_element(y.begin(), y.end());
  const auto n = y.size();
  int peaks = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const bool left_ok = k == 0 || y[k - 1] < y[k];
    const bool right_ok = k + 1 == n || y[k + 1] < y[k];
    if (!left_ok || !right_ok) continue;
    // lowest point on each side before meeting higher ground
    double left_min = y[k], right_min = y[k];
    for (std::size_t j = k; j-- > 0;) {
      if (y[j] > y[k]) break;
      left_min = std::min(left_min, y[j]);
    }
    for (std::size_t j = k + 1; j < n; ++j) {
      if (y[j] > y[k]) break;
      right_min = std::min(right_min, y[j]);
    }
    // an edge of the series counts as descending to zero
    if (k == 0) left_min = std::min(left_min, 0.0);
    if (k + 1 == n) right_min = std::min(right_min, 0.0);
    if (y[k] - std::max(left_min, right_min) >= threshold) ++peaks;
  }
  return peaks;
}

}  // namespace stochred
