#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stochred/dynamics.hpp"
#include "stochred/error.hpp"
#include "stochred/lag_covariance.hpp"
#include "stochred/params.hpp"
#include "stochred/random.hpp"
#include "stochred/simulate.hpp"

namespace stochred {

/// Pooled (mean, standard deviation) of an uncoupled, unrescaled model.
struct Climatology {
  double mean = 0.0;
  double std = 0.0;
};

/// Long run of the unrescaled Lorenz 96 model with `n` variables, started
/// from the constant state F plus a small seeded perturbation. Mean and
/// standard deviation are pooled over all components and retained times.
inline Climatology calibrate_climatology(double forcing, int n, double t_avg, double dt,
                                         double spinup, std::uint64_t seed = 1) {
  if (n < 4) throw InvalidDimension("climatology needs n >= 4");
  const auto plan = SamplingPlan::from_times(spinup + t_avg, spinup, dt, 1);
  NormalSource rng(seed);
  Vector x0 = Vector::Constant(n, forcing) + 0.01 * rng.vector(n);

  double sum = 0.0;
  double sum2 = 0.0;
  std::size_t count = 0;
  const double shift = forcing;  // reduces cancellation in the second moment
  try {
    run_rk4(L96Field{forcing}, std::move(x0), plan, [&](const VectorRef& s) {
      const auto c = s.array() - shift;
      sum += c.sum();
      sum2 += c.square().sum();
      count += static_cast<std::size_t>(s.size());
    });
  } catch (const NumericalBlowup& e) {
    throw NumericalBlowup(e.step(), e.time(),
                          std::string("climatology run: ") + e.what() + " (try a smaller dt)");
  }
  const double m = sum / static_cast<double>(count);
  const double var = std::max(0.0, sum2 / static_cast<double>(count) - m * m);
  Climatology c{shift + m, std::sqrt(var)};
  if (!(c.std > 1e-6 * std::max(1.0, std::abs(c.mean)))) {
    throw DegenerateClimatology("climatology for F = " + std::to_string(forcing) +
                                " has (near) zero spread; the uncoupled model is not chaotic");
  }
  return c;
}

/// Limiting-fast-system run options. `time_scale` speeds up the fast clock
/// (the field is multiplied by it and dt, sampling interval and lag window
/// are divided by it); covariance integrals are reported back in eps-free
/// time units so results do not depend on it.
struct LimitingRunOptions {
  double t_total = 10000.0;
  double spinup = 100.0;
  double dt = 0.001;
  std::size_t stride = 10;
  double time_scale = 1.0;
  std::uint64_t seed = 1;
  double init_amplitude = 1.0;
};

namespace detail {

inline SamplingPlan limiting_plan(const LimitingRunOptions& o) {
  if (!(o.time_scale > 0.0)) throw ConfigError("time_scale must be positive");
  return SamplingPlan::from_times(o.t_total / o.time_scale, o.spinup / o.time_scale,
                                  o.dt / o.time_scale, o.stride);
}

inline Vector limiting_initial_state(const LorenzParams& p, std::uint64_t seed, double amplitude) {
  NormalSource rng(seed);
  return amplitude * rng.vector(p.n_y());
}

}  // namespace detail

/// Stored trajectory of the limiting fast system at the frozen slow state
/// (rows = samples after spinup).
inline Eigen::MatrixXd run_limiting_fast(const SlowState& x_param, const LorenzParams& p,
                                         const LimitingRunOptions& o) {
  p.validate();
  const auto plan = detail::limiting_plan(o);
  LimitingFastField field(p, x_param.values, o.time_scale);
  SeriesRecorder rec(plan.sample_count(), p.n_y());
  run_rk4(field, detail::limiting_initial_state(p, o.seed, o.init_amplitude), plan, rec);
  return std::move(rec).take();
}

/// Convenience overload with the argument order of the operation table.
inline Eigen::MatrixXd run_limiting_fast(const SlowState& x_param, const LorenzParams& p,
                                         double t_total, double dt, std::size_t stride,
                                         double spinup = 100.0, std::uint64_t seed = 1) {
  LimitingRunOptions o;
  o.t_total = t_total;
  o.dt = dt;
  o.stride = stride;
  o.spinup = spinup;
  o.seed = seed;
  return run_limiting_fast(x_param, p, o);
}

/// Result of R = cbar * c0^{-1} along with the condition number of c0.
struct ResponseMatrix {
  Matrix r;
  double condition = 0.0;
};

/// Maximum condition number of C(0) accepted by response_matrix.
inline constexpr double kMaxCovarianceCondition = 1e12;

/// R = cbar * c0^{-1}, computed by solving c0^T R^T = cbar^T.
inline ResponseMatrix response_matrix(const Matrix& cbar, const Matrix& c0) {
  if (c0.rows() != c0.cols() || cbar.rows() != c0.rows() || cbar.cols() != c0.cols()) {
    throw InvalidDimension("response_matrix: cbar and c0 must be square of the same size");
  }
  const Eigen::JacobiSVD<Matrix> svd(c0);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  const double smin = sv.size() > 0 ? sv[sv.size() - 1] : 0.0;
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxCovarianceCondition)) {
    throw SingularCovariance(cond, "C(0) is singular (condition number " + std::to_string(cond) +
                                       "); the fast series may be too short or degenerate");
  }
  ResponseMatrix out;
  out.condition = cond;
  out.r = c0.transpose().partialPivLu().solve(cbar.transpose()).transpose();
  return out;
}

/// S and its symmetric positive semidefinite square root.
struct DiffusionMatrices {
  Matrix s;
  Matrix sigma;
  int clamped_eigenvalues = 0;
  double min_eigenvalue = 0.0;
};

/// Relative threshold below which negative eigenvalues of S are an error
/// rather than round-off.
inline constexpr double kNegativeEigenTolerance = 1e-8;

/// sigma = X Lambda^{1/2} X^T from S X = X Lambda. Eigenvalues in
/// [-1e-8 lambda_max, 0) are clamped to zero and counted; anything more
/// negative throws NotPositiveSemidefinite.
inline DiffusionMatrices psd_square_root(const Matrix& s_in) {
  if (s_in.rows() != s_in.cols()) throw InvalidDimension("S must be square");
  DiffusionMatrices out;
  out.s = 0.5 * (s_in + s_in.transpose());
  const Eigen::Index n = out.s.rows();
  if (n == 0) {
    out.sigma = out.s;
    return out;
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(out.s);
  if (eig.info() != Eigen::Success) throw NotPositiveSemidefinite(0.0, "eigensolver failed on S");
  Vector lambda = eig.eigenvalues();
  const double lmax = lambda.cwiseAbs().maxCoeff();
  out.min_eigenvalue = lambda.minCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lambda[i] < 0.0) {
      if (lambda[i] < -kNegativeEigenTolerance * lmax) {
        throw NotPositiveSemidefinite(
            lambda[i], "S has a materially negative eigenvalue " + std::to_string(lambda[i]) +
                           " (lambda_max " + std::to_string(lmax) +
                           "); the integrated covariance is probably under-sampled");
      }
      lambda[i] = 0.0;
      ++out.clamped_eigenvalues;
    }
  }
  const Matrix& x = eig.eigenvectors();
  Matrix sigma = x * lambda.cwiseSqrt().asDiagonal() * x.transpose();
  out.sigma = 0.5 * (sigma + sigma.transpose());
  return out;
}

/// S = L_y (cbar + cbar^T) L_y^T through the structured coupling operator,
/// then its square root.
inline DiffusionMatrices diffusion_matrices(const Matrix& cbar, const CouplingOperators& ops) {
  if (cbar.rows() != ops.n_y() || cbar.cols() != ops.n_y()) {
    throw InvalidDimension("diffusion_matrices: cbar must be n_y x n_y");
  }
  return psd_square_root(ops.congruence(cbar + cbar.transpose()));
}

/// Provenance recorded with an artifact.
struct ArtifactMetadata {
  LorenzParams params;
  LimitingRunOptions run;
  TruncationRule truncation;
  double tau_trunc = 0.0;
  bool decay_met = false;
  double noise_floor = 0.0;
  double trunc_threshold = 0.0;
  int clamped_eigenvalues = 0;
  double c0_condition = 0.0;
  std::size_t samples = 0;
  double sample_dt = 0.0;
  std::string x_star_source = "user";
  double x_star_t_avg = 0.0;
  std::uint64_t x_star_seed = 0;
};

/// Everything needed to assemble a reduced model. Covariance integrals are
/// in eps-free time units of the limiting fast system.
struct CalibrationArtifact {
  Vector x_star;
  Vector z_mean;
  Matrix c0;
  Matrix cbar;
  Matrix r_mat;
  Matrix s_mat;
  Matrix sigma;
  ArtifactMetadata metadata;
};

/// Limiting run at x_star streamed into the lag covariance estimator, then
/// integration, response matrix and diffusion matrices.
inline CalibrationArtifact build_artifact(const LorenzParams& p, const SlowState& x_star,
                                          const LimitingRunOptions& run = {},
                                          const TruncationRule& trunc = {}) {
  p.validate();
  detail::require_size(x_star.values.size(), p.n_x, "x_star");
  const auto plan = detail::limiting_plan(run);
  const double k = run.time_scale;
  const double sample_dt = plan.sample_dt();  // in the run's own clock
  const auto lag_steps = static_cast<std::size_t>(std::floor(trunc.max_lag / k / sample_dt + 1e-9));
  if (plan.sample_count() < 2 * lag_steps) {
    throw InsufficientData("limiting run yields " + std::to_string(plan.sample_count()) +
                           " samples, fewer than twice the lag window");
  }

  LagCovarianceAccumulator acc(p.n_y(), lag_steps, sample_dt);
  LimitingFastField field(p, x_star.values, k);
  run_rk4(field, detail::limiting_initial_state(p, run.seed, run.init_amplitude), plan,
          [&](const VectorRef& z) { acc.push(z); });

  CalibrationArtifact a;
  a.x_star = x_star.values;
  a.z_mean = acc.mean();
  LagCovariance lc = acc.finish();

  TruncationRule run_rule = trunc;
  run_rule.max_lag = trunc.max_lag / k;
  run_rule.sustain = trunc.sustain / k;
  const auto ic = integrate_covariance(lc, run_rule);

  a.c0 = lc.matrices.front();
  a.cbar = k * ic.cbar;  // back to eps-free time units
  const auto resp = response_matrix(a.cbar, a.c0);
  a.r_mat = resp.r;
  const auto diff = diffusion_matrices(a.cbar, CouplingOperators(p));
  a.s_mat = diff.s;
  a.sigma = diff.sigma;

  a.metadata.params = p;
  a.metadata.run = run;
  a.metadata.truncation = trunc;
  a.metadata.tau_trunc = ic.tau_trunc * k;
  a.metadata.decay_met = ic.decay_met;
  a.metadata.noise_floor = ic.noise_floor;
  a.metadata.trunc_threshold = ic.threshold;
  a.metadata.clamped_eigenvalues = diff.clamped_eigenvalues;
  a.metadata.c0_condition = resp.condition;
  a.metadata.samples = acc.count();
  a.metadata.sample_dt = sample_dt * k;
  return a;
}

/// Long-run mean of the slow variables of the full two-scale model, the
/// default choice of x_star.
inline Vector full_model_mean(const LorenzParams& p, double t_avg, double spinup, double dt,
                              std::uint64_t seed) {
  p.validate();
  const auto plan = SamplingPlan::from_times(spinup + t_avg, spinup, dt, 1);
  TwoScaleField field(p);
  NormalSource rng(seed);
  Vector state = rng.vector(field.dim());
  Vector sum = Vector::Zero(p.n_x);
  std::size_t count = 0;
  run_rk4(field, std::move(state), plan, [&](const VectorRef& s) {
    sum += s.head(p.n_x);
    ++count;
  });
  return sum / static_cast<double>(count);
}

}  // namespace stochred
