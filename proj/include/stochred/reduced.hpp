#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "stochred/calibration.hpp"
#include "stochred/dynamics.hpp"
#include "stochred/error.hpp"
#include "stochred/integrators.hpp"
#include "stochred/params.hpp"
#include "stochred/random.hpp"
#include "stochred/simulate.hpp"

namespace stochred {

enum class ModelKind { zero_order, deterministic, stochastic };

inline constexpr ModelKind kAllReducedKinds[] = {ModelKind::stochastic, ModelKind::deterministic,
                                                 ModelKind::zero_order};

inline std::string_view to_string(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::zero_order: return "zero_order";
    case ModelKind::deterministic: return "deterministic";
    case ModelKind::stochastic: return "stochastic";
  }
  return "?";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) noexcept {
  for (ModelKind k : kAllReducedKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// What to build from an artifact.
struct ReducedModelSpec {
  ModelKind kind = ModelKind::stochastic;
  CalibrationArtifact artifact;
  LorenzParams params;
  /// The artifact holds sigma for the eps-free fast clock; the physical
  /// noise is sqrt(eps) times that. Switch off to use sigma as stored.
  bool scale_noise_by_sqrt_eps = true;
  /// Extra multiplier on the noise (1 for the model proper).
  double noise_scale = 1.0;
};

/// Reduced slow dynamics
///   dx = [f(x) + L_y <z> + L_y R L_x (x - x*)] dt + sigma_eff dW
/// with f the uncoupled rescaled slow tendency. The zero-order model drops
/// the linear term and the noise; the deterministic model drops the noise.
class ReducedModel {
 public:
  explicit ReducedModel(const ReducedModelSpec& spec) : kind_(spec.kind), p_(spec.params) {
    p_.validate();
    const auto& a = spec.artifact;
    const CouplingOperators ops(p_);
    detail::require_size(a.x_star.size(), p_.n_x, "artifact x_star");
    detail::require_size(a.z_mean.size(), p_.n_y(), "artifact z_mean");
    x_star_ = a.x_star;
    mean_forcing_ = ops.apply_ly(a.z_mean);
    if (kind_ != ModelKind::zero_order) {
      response_ = ops.sandwich(a.r_mat);
    } else {
      response_ = Matrix::Zero(p_.n_x, p_.n_x);
    }
    noise_ = Matrix::Zero(p_.n_x, p_.n_x);
    if (kind_ == ModelKind::stochastic) {
      if (a.sigma.rows() != p_.n_x || a.sigma.cols() != p_.n_x) {
        throw InvalidDimension("stochastic model needs an n_x x n_x sigma");
      }
      const double scale =
          spec.noise_scale * (spec.scale_noise_by_sqrt_eps ? std::sqrt(p_.eps) : 1.0);
      noise_ = scale * a.sigma;
    }
  }

  ModelKind kind() const noexcept { return kind_; }
  const LorenzParams& params() const noexcept { return p_; }
  const Vector& x_star() const noexcept { return x_star_; }
  /// L_y <z>
  const Vector& mean_forcing() const noexcept { return mean_forcing_; }
  /// L_y R L_x, zero for the zero-order model.
  const Matrix& response() const noexcept { return response_; }
  /// Diffusion matrix actually applied to dW.
  const Matrix& noise() const noexcept { return noise_; }
  bool has_noise() const noexcept { return kind_ == ModelKind::stochastic; }

  void operator()(const VectorRef& x, Eigen::Ref<Vector> out) const {
    detail::require_size(x.size(), p_.n_x, "reduced state");
    rescaled_slow_rhs(x, p_, out);
    out += mean_forcing_;
    if (kind_ != ModelKind::zero_order) out.noalias() += response_ * (x - x_star_);
  }

 private:
  ModelKind kind_;
  LorenzParams p_;
  Vector x_star_;
  Vector mean_forcing_;
  Matrix response_;
  Matrix noise_;
};

inline Vector reduced_drift(const SlowState& x, const ReducedModel& model) {
  Vector out(model.params().n_x);
  model(x.values, out);
  return out;
}

enum class ReducedIntegrator { automatic, rk4, euler_maruyama };

struct ReducedRunOptions {
  /// Averaging window after the spinup.
  double t_avg = 10000.0;
  double spinup = 100.0;
  double dt = 0.005;
  double sample_interval = 0.05;
  std::uint64_t seed = 1;
  /// automatic: RK4 without noise, Euler-Maruyama with it.
  ReducedIntegrator integrator = ReducedIntegrator::automatic;
};

inline std::size_t sample_stride(double sample_interval, double dt) {
  const double r = sample_interval / dt;
  const auto stride = static_cast<std::size_t>(std::llround(r));
  if (stride == 0 || std::abs(r - static_cast<double>(stride)) > 1e-6 * r) {
    throw ConfigError("sample interval must be a whole multiple of the time step");
  }
  return stride;
}

/// x* plus a seeded perturbation of the given amplitude.
inline Vector perturbed_start(const Vector& x_star, std::uint64_t seed, double amplitude = 1e-3) {
  NormalSource rng(seed);
  return x_star + amplitude * rng.vector(x_star.size());
}

/// Integrates a reduced model and returns the retained samples as rows.
/// The noise stream is seeded from `o.seed` and only drawn when the model
/// is stochastic.
inline Matrix simulate_reduced(const ReducedModel& model, const Vector& x0,
                               const ReducedRunOptions& o) {
  const auto& p = model.params();
  detail::require_size(x0.size(), p.n_x, "initial reduced state");
  const auto plan = SamplingPlan::from_times(o.spinup + o.t_avg, o.spinup, o.dt,
                                             sample_stride(o.sample_interval, o.dt));
  SeriesRecorder rec(plan.sample_count(), p.n_x);

  const bool use_em = o.integrator == ReducedIntegrator::euler_maruyama ||
                      (o.integrator == ReducedIntegrator::automatic && model.has_noise());
  if (!use_em) {
    run_rk4(model, x0, plan, rec);
    return std::move(rec).take();
  }

  NormalSource rng(o.seed);
  const double sqdt = std::sqrt(o.dt);
  const bool draw = model.has_noise();
  Vector x = x0;
  Vector f(p.n_x);
  Vector w = Vector::Zero(p.n_x);
  for (std::size_t step = 0;; ++step) {
    if (step >= plan.spinup_steps && (step - plan.spinup_steps) % plan.stride == 0) rec(x);
    if (step == plan.total_steps) break;
    model(x, f);
    x += o.dt * f;
    if (draw) {
      rng.fill(w);
      x.noalias() += sqdt * (model.noise() * w);
    }
    if (!x.allFinite()) {
      throw NumericalBlowup(step, o.dt * static_cast<double>(step + 1),
                            std::string(to_string(model.kind())) + " model blew up at t = " +
                                std::to_string(o.dt * static_cast<double>(step + 1)));
    }
  }
  return std::move(rec).take();
}

}  // namespace stochred
