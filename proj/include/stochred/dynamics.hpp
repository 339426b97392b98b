#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "stochred/error.hpp"
#include "stochred/params.hpp"

namespace stochred {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Vector>;

/// Slow variables x_i, length n_x.
struct SlowState {
  Vector values;
};

/// Fast variables y_{i,j} flattened with j fastest, length n_x * j_per. The
/// periodic rules y_{i,j+J} = y_{i+1,j} and y_{i+N_x,j} = y_{i,j} make this a
/// single ring of length n_x * j_per.
struct FastState {
  Vector values;
};

namespace detail {

inline Eigen::Index wrap(Eigen::Index k, Eigen::Index n) noexcept {
  if (k < 0) return k + n;
  if (k >= n) return k - n;
  return k;
}

inline void require_size(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw InvalidDimension(std::string(what) + ": expected length " + std::to_string(want) +
                           ", got " + std::to_string(got));
  }
}

}  // namespace detail

/// Structured coupling maps. L_y sends the fast ring to the slow variables
/// (block sums scaled by -lambda_y / J); L_x sends slow to fast by repeating
/// lambda_x * x_i over the block of i. L_x is written in the eps-free
/// convention; the full model applies the 1/eps factor itself.
class CouplingOperators {
 public:
  CouplingOperators(double lambda_x, double lambda_y, int j_per, int n_x)
      : lambda_x_(lambda_x), lambda_y_(lambda_y), j_per_(j_per), n_x_(n_x) {
    if (j_per < 1 || n_x < 1) throw InvalidDimension("coupling operators need positive sizes");
  }

  explicit CouplingOperators(const LorenzParams& p)
      : CouplingOperators(p.lambda_x, p.lambda_y, p.j_per, p.n_x) {}

  int n_x() const noexcept { return n_x_; }
  int n_y() const noexcept { return n_x_ * j_per_; }
  int j_per() const noexcept { return j_per_; }
  double lambda_x() const noexcept { return lambda_x_; }
  double lambda_y() const noexcept { return lambda_y_; }

  /// (L_y y)_i = -(lambda_y / J) sum_j y_{i,j}
  Vector apply_ly(const VectorRef& y) const {
    detail::require_size(y.size(), n_y(), "apply_ly");
    Vector out(n_x_);
    const double scale = -lambda_y_ / j_per_;
    for (int i = 0; i < n_x_; ++i) out[i] = scale * y.segment(i * j_per_, j_per_).sum();
    return out;
  }

  /// (L_x x)_{i,j} = lambda_x x_i
  Vector apply_lx(const VectorRef& x) const {
    detail::require_size(x.size(), n_x_, "apply_lx");
    Vector out(n_y());
    for (int i = 0; i < n_x_; ++i) out.segment(i * j_per_, j_per_).setConstant(lambda_x_ * x[i]);
    return out;
  }

  /// L_y M L_y^T for an n_y x n_y matrix M.
  Matrix congruence(const Matrix& m) const {
    require_square(m, "congruence");
    const double s = lambda_y_ / j_per_;
    Matrix out(n_x_, n_x_);
    for (int a = 0; a < n_x_; ++a) {
      for (int b = 0; b < n_x_; ++b) {
        out(a, b) = s * s * m.block(a * j_per_, b * j_per_, j_per_, j_per_).sum();
      }
    }
    return out;
  }

  /// L_y M L_x for an n_y x n_y matrix M.
  Matrix sandwich(const Matrix& m) const {
    require_square(m, "sandwich");
    const double s = -lambda_y_ / j_per_ * lambda_x_;
    Matrix out(n_x_, n_x_);
    for (int a = 0; a < n_x_; ++a) {
      for (int b = 0; b < n_x_; ++b) {
        out(a, b) = s * m.block(a * j_per_, b * j_per_, j_per_, j_per_).sum();
      }
    }
    return out;
  }

 private:
  void require_square(const Matrix& m, const char* what) const {
    if (m.rows() != n_y() || m.cols() != n_y()) {
      throw InvalidDimension(std::string(what) + ": expected " + std::to_string(n_y()) + "x" +
                             std::to_string(n_y()) + " matrix");
    }
  }

  double lambda_x_;
  double lambda_y_;
  int j_per_;
  int n_x_;
};

/// Uncoupled, unrescaled Lorenz 96:
/// ds_i/dt = s_{i-1}(s_{i+1} - s_{i-2}) - s_i + F.
inline void unrescaled_l96_rhs(const VectorRef& s, double forcing, Eigen::Ref<Vector> out) {
  const Eigen::Index n = s.size();
  if (n < 4) throw InvalidDimension("Lorenz 96 needs at least 4 variables");
  detail::require_size(out.size(), n, "unrescaled_l96_rhs output");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sm1 = s[detail::wrap(i - 1, n)];
    const double sm2 = s[detail::wrap(i - 2, n)];
    const double sp1 = s[detail::wrap(i + 1, n)];
    out[i] = sm1 * (sp1 - sm2) - s[i] + forcing;
  }
}

inline Vector unrescaled_l96_rhs(const VectorRef& s, double forcing) {
  if (s.size() < 4) throw InvalidDimension("Lorenz 96 needs at least 4 variables");
  Vector out(s.size());
  unrescaled_l96_rhs(s, forcing, out);
  return out;
}

/// Uncoupled slow equation of the rescaled model:
/// x_{i-1}(x_{i+1} - x_{i-2}) + (mu (x_{i+1} - x_{i-2}) - x_i) / sd + (F - mu) / sd^2.
inline void rescaled_slow_rhs(const VectorRef& x, const LorenzParams& p, Eigen::Ref<Vector> out) {
  const Eigen::Index n = x.size();
  detail::require_size(n, p.n_x, "slow state");
  detail::require_size(out.size(), n, "slow tendency");
  const double inv_sd = 1.0 / p.sd_x;
  const double forcing = (p.f_x - p.mu_x) * inv_sd * inv_sd;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xm1 = x[detail::wrap(i - 1, n)];
    const double xm2 = x[detail::wrap(i - 2, n)];
    const double xp1 = x[detail::wrap(i + 1, n)];
    const double adv = xp1 - xm2;
    out[i] = xm1 * adv + (p.mu_x * adv - x[i]) * inv_sd + forcing;
  }
}

inline Vector rescaled_slow_rhs(const VectorRef& x, const LorenzParams& p) {
  Vector out(x.size());
  rescaled_slow_rhs(x, p, out);
  return out;
}

/// Bracketed fast term of the rescaled model, without the 1/eps factor and
/// without coupling. Note the reversed stencil y_{k+1}(y_{k-1} - y_{k+2}).
inline void fast_bracket(const VectorRef& y, const LorenzParams& p, Eigen::Ref<Vector> out) {
  const Eigen::Index n = y.size();
  detail::require_size(n, p.n_y(), "fast state");
  detail::require_size(out.size(), n, "fast tendency");
  const double inv_sd = 1.0 / p.sd_y;
  const double forcing = (p.f_y - p.mu_y) * inv_sd * inv_sd;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double ym1 = y[detail::wrap(k - 1, n)];
    const double yp1 = y[detail::wrap(k + 1, n)];
    const double yp2 = y[detail::wrap(k + 2, n)];
    const double adv = ym1 - yp2;
    out[k] = yp1 * adv + (p.mu_y * adv - y[k]) * inv_sd + forcing;
  }
}

struct TwoScaleTendency {
  Vector slow;
  Vector fast;
};

/// Full rescaled two-scale system with linear coupling. Writes slow and fast
/// tendencies into the given outputs.
inline void two_scale_rhs(const VectorRef& x, const VectorRef& y, const LorenzParams& p,
                          Eigen::Ref<Vector> dx, Eigen::Ref<Vector> dy) {
  detail::require_size(y.size(), p.n_y(), "fast state");
  rescaled_slow_rhs(x, p, dx);
  fast_bracket(y, p, dy);
  const int J = p.j_per;
  const double ly = p.lambda_y / J;
  const double inv_eps = 1.0 / p.eps;
  const double lx = p.lambda_x * inv_eps;
  for (int i = 0; i < p.n_x; ++i) {
    dx[i] -= ly * y.segment(i * J, J).sum();
    const double push = lx * x[i];
    for (int j = 0; j < J; ++j) {
      double& d = dy[i * J + j];
      d = d * inv_eps + push;
    }
  }
}

inline TwoScaleTendency two_scale_rhs(const SlowState& slow, const FastState& fast,
                                      const LorenzParams& p) {
  TwoScaleTendency t{Vector(p.n_x), Vector(p.n_y())};
  detail::require_size(slow.values.size(), p.n_x, "slow state");
  two_scale_rhs(slow.values, fast.values, p, t.slow, t.fast);
  return t;
}

/// Limiting fast system with the slow state frozen, in the eps-free
/// convention: fast bracket + lambda_x x_i. Equals eps times the fast
/// tendency of the full model.
inline void limiting_fast_rhs(const VectorRef& y, const VectorRef& x_param, const LorenzParams& p,
                              Eigen::Ref<Vector> out) {
  detail::require_size(x_param.size(), p.n_x, "frozen slow state");
  fast_bracket(y, p, out);
  const int J = p.j_per;
  for (int i = 0; i < p.n_x; ++i) {
    out.segment(i * J, J).array() += p.lambda_x * x_param[i];
  }
}

inline Vector limiting_fast_rhs(const FastState& fast, const SlowState& x_param,
                                const LorenzParams& p) {
  Vector out(fast.values.size());
  limiting_fast_rhs(fast.values, x_param.values, p, out);
  return out;
}

/// E = (lambda_x / 2) sum x_i^2 + (eps lambda_y / 2J) sum y_{i,j}^2
inline double coupling_energy(const SlowState& slow, const FastState& fast, const LorenzParams& p) {
  detail::require_size(slow.values.size(), p.n_x, "slow state");
  detail::require_size(fast.values.size(), p.n_y(), "fast state");
  return 0.5 * p.lambda_x * slow.values.squaredNorm() +
         0.5 * p.eps * p.lambda_y / p.j_per * fast.values.squaredNorm();
}

/// dE/dt restricted to the coupling terms of two_scale_rhs. Vanishes
/// identically; evaluated term by term so the cancellation is observable.
inline double coupling_energy_rate(const SlowState& slow, const FastState& fast,
                                   const LorenzParams& p) {
  detail::require_size(slow.values.size(), p.n_x, "slow state");
  detail::require_size(fast.values.size(), p.n_y(), "fast state");
  const int J = p.j_per;
  double slow_part = 0.0;
  double fast_part = 0.0;
  for (int i = 0; i < p.n_x; ++i) {
    const double xi = slow.values[i];
    double block = 0.0;
    for (int j = 0; j < J; ++j) block += fast.values[i * J + j];
    // dE/dx_i * (coupling in dx_i/dt)
    slow_part += p.lambda_x * xi * (-p.lambda_y / J * block);
    // sum_j dE/dy_ij * (coupling in dy_ij/dt)
    fast_part += (p.eps * p.lambda_y / J) * block * (p.lambda_x / p.eps * xi);
  }
  return slow_part + fast_part;
}

/// Full two-scale model as a single vector field over [x; y].
class TwoScaleField {
 public:
  explicit TwoScaleField(LorenzParams p) : p_(std::move(p)) { p_.validate(); }

  const LorenzParams& params() const noexcept { return p_; }
  Eigen::Index dim() const noexcept { return p_.n_x + p_.n_y(); }

  void operator()(const VectorRef& state, Eigen::Ref<Vector> out) const {
    detail::require_size(state.size(), dim(), "two-scale state");
    two_scale_rhs(state.head(p_.n_x), state.tail(p_.n_y()), p_, out.head(p_.n_x),
                  out.tail(p_.n_y()));
  }

 private:
  LorenzParams p_;
};

/// Limiting fast system with slow state frozen at x_param. `time_scale`
/// multiplies the whole tendency; 1 is the eps-free convention, 1/eps
/// reproduces the physical fast clock of the full model.
class LimitingFastField {
 public:
  LimitingFastField(LorenzParams p, Vector x_param, double time_scale = 1.0)
      : p_(std::move(p)), x_(std::move(x_param)), time_scale_(time_scale) {
    detail::require_size(x_.size(), p_.n_x, "frozen slow state");
  }

  Eigen::Index dim() const noexcept { return p_.n_y(); }
  double time_scale() const noexcept { return time_scale_; }

  void operator()(const VectorRef& y, Eigen::Ref<Vector> out) const {
    limiting_fast_rhs(y, x_, p_, out);
    if (time_scale_ != 1.0) out *= time_scale_;
  }

 private:
  LorenzParams p_;
  Vector x_;
  double time_scale_;
};

/// Unrescaled uncoupled Lorenz 96 as a vector field.
struct L96Field {
  double forcing;
  void operator()(const VectorRef& s, Eigen::Ref<Vector> out) const {
    unrescaled_l96_rhs(s, forcing, out);
  }
};

}  // namespace stochred
