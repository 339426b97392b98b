#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <string>

#include "stochred/error.hpp"
#include "stochred/integrators.hpp"

namespace stochred {

/// Sampling plan for a fixed-step run: `total_steps` steps of size dt, of
/// which the first `spinup_steps` are discarded; afterwards every
/// `stride`-th state (starting with the first post-spinup state) is emitted.
struct SamplingPlan {
  double dt = 0.0;
  std::size_t total_steps = 0;
  std::size_t spinup_steps = 0;
  std::size_t stride = 1;

  /// t_total includes the spinup.
  static SamplingPlan from_times(double t_total, double spinup, double dt, std::size_t stride) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (stride == 0) throw ConfigError("stride must be positive");
    if (!(spinup >= 0.0) || !(t_total > spinup)) {
      throw ConfigError("need t_total > spinup >= 0");
    }
    SamplingPlan plan;
    plan.dt = dt;
    plan.total_steps = static_cast<std::size_t>(std::floor(t_total / dt + 1e-9));
    plan.spinup_steps = static_cast<std::size_t>(std::floor(spinup / dt + 1e-9));
    plan.stride = stride;
    return plan;
  }

  std::size_t sample_count() const noexcept {
    if (total_steps < spinup_steps) return 0;
    return (total_steps - spinup_steps) / stride + 1;
  }

  double sample_dt() const noexcept { return dt * static_cast<double>(stride); }
};

/// Runs RK4 according to `plan`, calling `sink(state)` for each retained
/// sample. Checks every step for blow-up.
template <class Field, class Sink>
void run_rk4(const Field& field, Vector state, const SamplingPlan& plan, Sink&& sink) {
  Rk4Stepper<const Field&> stepper(field, state.size());
  for (std::size_t step = 0;; ++step) {
    if (step >= plan.spinup_steps && (step - plan.spinup_steps) % plan.stride == 0) sink(state);
    if (step == plan.total_steps) break;
    stepper.step(state, plan.dt);
    if (!state.allFinite()) {
      throw NumericalBlowup(step, plan.dt * static_cast<double>(step + 1),
                            "trajectory blew up at t = " +
                                std::to_string(plan.dt * static_cast<double>(step + 1)) +
                                "; reduce the time step");
    }
  }
}

/// Stores the retained samples of `run_rk4` as rows of a matrix.
class SeriesRecorder {
 public:
  SeriesRecorder(std::size_t rows, Eigen::Index cols) : data_(static_cast<Eigen::Index>(rows), cols) {}

  void operator()(const VectorRef& s) {
    data_.row(next_++) = s.transpose();
  }

  Eigen::MatrixXd take() && {
    data_.conservativeResize(next_, Eigen::NoChange);
    return std::move(data_);
  }

 private:
  Eigen::MatrixXd data_;
  Eigen::Index next_ = 0;
};

}  // namespace stochred
