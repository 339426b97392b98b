#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <string>

#include "stochred/dynamics.hpp"
#include "stochred/error.hpp"

namespace stochred {

namespace detail {

inline void check_finite(const Vector& v, std::size_t step, double time) {
  if (!v.allFinite()) {
    throw NumericalBlowup(step, time,
                          "non-finite state at step " + std::to_string(step) + " (t = " +
                              std::to_string(time) + "); try a smaller time step");
  }
}

}  // namespace detail

/// Classical four-stage Runge-Kutta with reusable stage storage. `Field` is
/// any callable `void(const VectorRef&, Eigen::Ref<Vector>)`.
template <class Field>
class Rk4Stepper {
 public:
  Rk4Stepper(Field field, Eigen::Index dim)
      : field_(std::move(field)), k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  const Field& field() const noexcept { return field_; }

  void step(Vector& state, double dt) {
    const double half = 0.5 * dt;
    field_(state, k1_);
    tmp_ = state + half * k1_;
    field_(tmp_, k2_);
    tmp_ = state + half * k2_;
    field_(tmp_, k3_);
    tmp_ = state + dt * k3_;
    field_(tmp_, k4_);
    state += (dt / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  Field field_;
  Vector k1_, k2_, k3_, k4_, tmp_;
};

/// One RK4 step as a pure function. Throws NumericalBlowup (tagged with
/// `step_index`) when the result is not finite.
template <class Field>
Vector rk4_step(const Field& field, const VectorRef& state, double dt, std::size_t step_index = 0) {
  if (!(dt > 0.0)) throw InvalidDimension("rk4_step: dt must be positive");
  Rk4Stepper<const Field&> stepper(field, state.size());
  Vector out = state;
  stepper.step(out, dt);
  detail::check_finite(out, step_index, dt * static_cast<double>(step_index + 1));
  return out;
}

/// Euler-Maruyama for additive noise:
/// state + drift(state) dt + sigma * normals * sqrt(dt).
template <class Drift>
Vector euler_maruyama_step(const Drift& drift, const Matrix& sigma, const VectorRef& state,
                           double dt, const VectorRef& normals) {
  if (!(dt > 0.0)) throw InvalidDimension("euler_maruyama_step: dt must be positive");
  const Eigen::Index n = state.size();
  if (sigma.rows() != n || sigma.cols() != normals.size()) {
    throw InvalidDimension("euler_maruyama_step: sigma must be " + std::to_string(n) + " x " +
                           std::to_string(normals.size()));
  }
  Vector f(n);
  drift(state, f);
  Vector out = state + dt * f;
  out.noalias() += std::sqrt(dt) * (sigma * normals);
  return out;
}

}  // namespace stochred
