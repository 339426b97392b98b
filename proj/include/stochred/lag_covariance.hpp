#pragma once

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "stochred/error.hpp"

namespace stochred {

/// C(m * dt_lag) for m = 0, 1, ..., matrices.size() - 1.
struct LagCovariance {
  double dt_lag = 0.0;
  std::vector<Eigen::MatrixXd> matrices;

  std::size_t size() const noexcept { return matrices.size(); }
  Eigen::Index dim() const noexcept { return matrices.empty() ? 0 : matrices.front().rows(); }
};

namespace detail {

// FFTW planning is not thread-safe.
inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const noexcept {
    if (p != nullptr) {
      std::lock_guard lock(fftw_plan_mutex());
      fftw_destroy_plan(p);
    }
  }
};
using FftwPlan = std::unique_ptr<fftw_plan_s, FftwPlanDeleter>;

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)));
  if (p == nullptr) throw std::bad_alloc();
  std::memset(static_cast<void*>(p), 0, sizeof(T) * n);
  return FftwBuffer<T>(p);
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

/// Streaming estimator of the mean and the lagged covariance
///
///   C(k) = 1/(M-k) sum_{t=0}^{M-k-1} (z(t+k) - <z>)(z(t) - <z>)^T,  k = 0..max_lag
///
/// of a d-dimensional series of M samples. Raw lagged products are
/// accumulated blockwise in the frequency domain (overlap-save), which makes
/// the cost O(M d^2) per block instead of O(M d^2 max_lag). The mean is
/// removed afterwards using head and tail partial sums, so a single pass
/// suffices. Planning uses FFTW_ESTIMATE so results are bitwise reproducible.
class LagCovarianceAccumulator {
 public:
  LagCovarianceAccumulator(Eigen::Index dim, std::size_t max_lag, double dt_sample)
      : d_(static_cast<std::size_t>(dim)), lag_(max_lag), dt_(dt_sample) {
    if (dim < 1) throw InvalidDimension("lag covariance needs dim >= 1");
    if (!(dt_sample > 0.0)) throw InvalidDimension("dt_sample must be positive");
    fft_n_ = detail::next_pow2(std::max<std::size_t>(2 * (lag_ + 1), 64));
    block_ = fft_n_ - lag_;
    bins_ = fft_n_ / 2 + 1;
    seg_len_ = block_ + lag_;

    buffer_.assign(d_ * seg_len_, 0.0);
    head_.reserve(d_ * lag_);
    tail_.assign(d_ * lag_, 0.0);
    total_ = Eigen::VectorXd::Zero(dim);
    acc_.assign(d_ * d_ * bins_, std::complex<double>(0.0, 0.0));

    a_time_ = detail::fftw_buffer<double>(d_ * fft_n_);
    e_time_ = detail::fftw_buffer<double>(d_ * fft_n_);
    a_freq_ = detail::fftw_buffer<fftw_complex>(d_ * bins_);
    e_freq_ = detail::fftw_buffer<fftw_complex>(d_ * bins_);

    const int n = static_cast<int>(fft_n_);
    const int howmany = static_cast<int>(d_);
    std::lock_guard lock(detail::fftw_plan_mutex());
    plan_a_.reset(fftw_plan_many_dft_r2c(1, &n, howmany, a_time_.get(), nullptr, 1, n,
                                         a_freq_.get(), nullptr, 1, static_cast<int>(bins_),
                                         FFTW_ESTIMATE));
    plan_e_.reset(fftw_plan_many_dft_r2c(1, &n, howmany, e_time_.get(), nullptr, 1, n,
                                         e_freq_.get(), nullptr, 1, static_cast<int>(bins_),
                                         FFTW_ESTIMATE));
  }

  LagCovarianceAccumulator(const LagCovarianceAccumulator&) = delete;
  LagCovarianceAccumulator& operator=(const LagCovarianceAccumulator&) = delete;
  LagCovarianceAccumulator(LagCovarianceAccumulator&&) = default;
  LagCovarianceAccumulator& operator=(LagCovarianceAccumulator&&) = default;

  Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(d_); }
  std::size_t max_lag() const noexcept { return lag_; }
  std::size_t count() const noexcept { return count_; }
  double dt_sample() const noexcept { return dt_; }

  void push(const Eigen::Ref<const Eigen::VectorXd>& z) {
    if (static_cast<std::size_t>(z.size()) != d_) {
      throw InvalidDimension("lag covariance sample has wrong dimension");
    }
    if (count_ == 0) shift_ = z;
    const Eigen::VectorXd v = z - shift_;
    total_ += v;
    if (count_ < lag_) head_.insert(head_.end(), v.data(), v.data() + d_);
    for (std::size_t a = 0; a < d_; ++a) {
      if (lag_ > 0) tail_[a * lag_ + count_ % lag_] = v[a];
      buffer_[a * seg_len_ + filled_] = v[a];
    }
    ++count_;
    ++filled_;
    if (filled_ == seg_len_) {
      consume(block_);
    }
  }

  Eigen::VectorXd mean() const {
    if (count_ == 0) throw InsufficientData("no samples");
    return shift_ + total_ / static_cast<double>(count_);
  }

  /// Finalizes the estimate. Requires at least 2 * max_lag samples (and at
  /// least 2 samples overall).
  LagCovariance finish() {
    const std::size_t m = count_;
    if (m < std::max<std::size_t>(2 * lag_, 2)) {
      throw InsufficientData("lag covariance needs at least " +
                             std::to_string(std::max<std::size_t>(2 * lag_, 2)) +
                             " samples, got " + std::to_string(m));
    }
    if (!finished_) {
      // Successors past the end of the series are zero, so the remaining
      // origins only pair with samples still in the buffer.
      while (filled_ > 0) consume(std::min(filled_, block_));
      finished_ = true;
    }

    const Eigen::Index d = dim();
    std::vector<Eigen::MatrixXd> raw(lag_ + 1, Eigen::MatrixXd(d, d));
    {
      auto time = detail::fftw_buffer<double>(fft_n_);
      auto freq = detail::fftw_buffer<fftw_complex>(bins_);
      detail::FftwPlan inv;
      {
        std::lock_guard lock(detail::fftw_plan_mutex());
        inv.reset(fftw_plan_dft_c2r_1d(static_cast<int>(fft_n_), freq.get(), time.get(),
                                       FFTW_ESTIMATE));
      }
      const double norm = 1.0 / static_cast<double>(fft_n_);
      for (std::size_t a = 0; a < d_; ++a) {
        for (std::size_t b = 0; b < d_; ++b) {
          const std::complex<double>* src = acc_.data() + (a * d_ + b) * bins_;
          for (std::size_t f = 0; f < bins_; ++f) {
            freq[f][0] = src[f].real();
            freq[f][1] = src[f].imag();
          }
          fftw_execute_dft_c2r(inv.get(), freq.get(), time.get());
          for (std::size_t k = 0; k <= lag_; ++k) {
            raw[k](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = time[k] * norm;
          }
        }
      }
    }

    // Partial sums of the shifted series: head(k) = sum_{t<k} v(t),
    // tailsum(k) = sum_{t>=m-k} v(t).
    const Eigen::Map<const Eigen::MatrixXd> head_mat(head_.data(), d,
                                                     static_cast<Eigen::Index>(head_.size() / d_));
    const Eigen::VectorXd mu = total_ / static_cast<double>(m);
    LagCovariance out;
    out.dt_lag = dt_;
    out.matrices.reserve(lag_ + 1);
    Eigen::VectorXd head_sum = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd tail_sum = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k <= lag_; ++k) {
      if (k > 0) {
        head_sum += head_mat.col(static_cast<Eigen::Index>(k - 1));
        const std::size_t t = m - k;  // index of sample entering the tail
        for (std::size_t a = 0; a < d_; ++a) tail_sum[a] += tail_[a * lag_ + t % lag_];
      }
      const double pairs = static_cast<double>(m - k);
      const Eigen::VectorXd later = total_ - head_sum;   // sum_{t>=k} v(t)
      const Eigen::VectorXd earlier = total_ - tail_sum;  // sum_{t<m-k} v(t)
      Eigen::MatrixXd c = raw[k] - later * mu.transpose() - mu * earlier.transpose() +
                          pairs * mu * mu.transpose();
      c /= pairs;
      out.matrices.push_back(std::move(c));
    }
    // C(0) is symmetric by definition; remove FFT round-off asymmetry.
    out.matrices[0] = 0.5 * (out.matrices[0] + out.matrices[0].transpose()).eval();
    return out;
  }

 private:
  // Uses the first `origins` buffered samples as lag origins, pairs them with
  // every buffered successor, then drops them from the buffer.
  void consume(std::size_t origins) {
    load_and_transform(origins, filled_);
    for (std::size_t a = 0; a < d_; ++a) {
      double* row = buffer_.data() + a * seg_len_;
      std::copy(row + origins, row + filled_, row);
    }
    filled_ -= origins;
  }

  // origins <= block_ and available <= fft_n_, so origin + lag never wraps.
  void load_and_transform(std::size_t origins, std::size_t available) {
    std::fill(a_time_.get(), a_time_.get() + d_ * fft_n_, 0.0);
    std::fill(e_time_.get(), e_time_.get() + d_ * fft_n_, 0.0);
    for (std::size_t a = 0; a < d_; ++a) {
      const double* row = buffer_.data() + a * seg_len_;
      double* at = a_time_.get() + a * fft_n_;
      double* et = e_time_.get() + a * fft_n_;
      std::copy(row, row + origins, at);
      std::copy(row, row + available, et);
    }
    fftw_execute(plan_a_.get());
    fftw_execute(plan_e_.get());
    for (std::size_t a = 0; a < d_; ++a) {
      const auto* ea = reinterpret_cast<const std::complex<double>*>(e_freq_.get() + a * bins_);
      for (std::size_t b = 0; b < d_; ++b) {
        const auto* ab = reinterpret_cast<const std::complex<double>*>(a_freq_.get() + b * bins_);
        std::complex<double>* dst = acc_.data() + (a * d_ + b) * bins_;
        for (std::size_t f = 0; f < bins_; ++f) dst[f] += std::conj(ab[f]) * ea[f];
      }
    }
  }

  std::size_t d_;
  std::size_t lag_;
  double dt_;
  std::size_t fft_n_ = 0;
  std::size_t block_ = 0;
  std::size_t bins_ = 0;
  std::size_t seg_len_ = 0;

  std::size_t count_ = 0;
  std::size_t filled_ = 0;
  bool finished_ = false;

  Eigen::VectorXd shift_;
  Eigen::VectorXd total_;
  std::vector<double> buffer_;  // component-major, seg_len_ per component
  std::vector<double> head_;    // first lag_ samples, sample-major
  std::vector<double> tail_;    // ring of the last lag_ samples, component-major
  std::vector<std::complex<double>> acc_;

  detail::FftwBuffer<double> a_time_, e_time_;
  detail::FftwBuffer<fftw_complex> a_freq_, e_freq_;
  detail::FftwPlan plan_a_, plan_e_;
};

/// Lagged covariance of a stored series (rows = time, columns = components)
/// on the lag grid {0, dt_sample, ..., max_lag}.
inline LagCovariance lagged_covariance(const Eigen::MatrixXd& series, double dt_sample,
                                       double max_lag) {
  if (!(max_lag >= 0.0)) throw InvalidDimension("max_lag must be non-negative");
  const auto lag_steps = static_cast<std::size_t>(std::floor(max_lag / dt_sample + 1e-9));
  const auto m = static_cast<std::size_t>(series.rows());
  if (m < std::max<std::size_t>(2 * lag_steps, 2)) {
    throw InsufficientData("series of " + std::to_string(m) +
                           " samples is shorter than twice the maximum lag (" +
                           std::to_string(lag_steps) + " steps)");
  }
  LagCovarianceAccumulator acc(series.cols(), lag_steps, dt_sample);
  for (Eigen::Index t = 0; t < series.rows(); ++t) acc.push(series.row(t).transpose());
  return acc.finish();
}

/// Result of integrating C(tau) over the lag grid.
struct IntegratedCovariance {
  Eigen::MatrixXd cbar;
  double tau_trunc = 0.0;
  /// False when the decay criterion was never met and the whole grid was used.
  bool decay_met = false;
  /// Median of ||C(tau)||_F / ||C(0)||_F over the back half of the window.
  double noise_floor = 0.0;
  /// Relative threshold actually applied.
  double threshold = 0.0;
};

/// Truncation rule for the improper integral of C(tau).
///
/// A finite sample never lets ||C(tau)|| settle much below its sampling
/// noise, which for a run of length T sits near 1/sqrt(T / tau_corr)
/// relative to C(0). The threshold is therefore
///   max(tol_decay, min(noise_factor * floor, noise_cap))
/// where `floor` is the median relative norm over [max_lag/2, max_lag].
/// Setting noise_factor = 0 gives the plain tol_decay rule.
struct TruncationRule {
  /// ||C(tau)||_F / ||C(0)||_F must stay below the threshold...
  double tol_decay = 1e-3;
  /// ...for this long (time units).
  double sustain = 1.0;
  /// Upper limit of integration (time units); the grid end if larger.
  double max_lag = 20.0;
  double noise_factor = 1.5;
  double noise_cap = 0.2;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

/// Trapezoidal integral of C(tau) over [0, tau_trunc]. tau_trunc is the
/// first lag from which the relative Frobenius norm stays below the rule's
/// threshold for `sustain` time units, capped at max_lag and at the end of
/// the grid.
inline IntegratedCovariance integrate_covariance(const LagCovariance& lc,
                                                 const TruncationRule& rule = {}) {
  if (lc.matrices.empty()) throw InsufficientData("empty lag covariance");
  const double h = lc.dt_lag;
  const std::size_t last_grid = lc.size() - 1;
  std::size_t cap = last_grid;
  if (rule.max_lag >= 0.0 && h > 0.0) {
    cap = std::min(cap, static_cast<std::size_t>(std::floor(rule.max_lag / h + 1e-9)));
  }

  IntegratedCovariance out;
  const double ref = lc.matrices.front().norm();
  const auto sustain_steps =
      h > 0.0 ? static_cast<std::size_t>(std::ceil(rule.sustain / h - 1e-9)) : std::size_t{0};
  std::size_t end = cap;
  bool met = false;
  if (ref == 0.0) {
    end = 0;
    met = true;
  } else {
    std::vector<double> rel(cap + 1);
    for (std::size_t k = 0; k <= cap; ++k) rel[k] = lc.matrices[k].norm() / ref;
    if (cap >= 2) {
      out.noise_floor = detail::median_of(std::vector<double>(
          rel.begin() + static_cast<std::ptrdiff_t>(cap / 2), rel.end()));
    }
    out.threshold =
        std::max(rule.tol_decay, std::min(rule.noise_factor * out.noise_floor, rule.noise_cap));

    std::size_t run_start = 0;
    std::size_t run_len = 0;
    for (std::size_t k = 0; k <= cap; ++k) {
      if (rel[k] < out.threshold) {
        if (run_len == 0) run_start = k;
        ++run_len;
        if (run_len > sustain_steps) {
          end = run_start;
          met = true;
          break;
        }
      } else {
        run_len = 0;
      }
    }
  }

  out.decay_met = met;
  out.tau_trunc = static_cast<double>(end) * h;
  out.cbar = Eigen::MatrixXd::Zero(lc.dim(), lc.dim());
  for (std::size_t k = 0; k < end; ++k) {
    out.cbar += 0.5 * h * (lc.matrices[k] + lc.matrices[k + 1]);
  }
  return out;
}

}  // namespace stochred
