#pragma once

#include <cmath>
#include <string>

#include "stochred/error.hpp"

namespace stochred {

/// Scalar parameters of the rescaled two-scale Lorenz 96 system.
///
/// The (mu, sd) pairs are the climatological mean and standard deviation of
/// the uncoupled, unrescaled slow and fast models. They rescale each
/// subsystem to zero mean and unit variance when the coupling is off.
struct LorenzParams {
  int n_x = 20;
  int j_per = 4;
  double eps = 0.1;
  double f_x = 6.0;
  double f_y = 16.0;
  double lambda_x = 0.3;
  double lambda_y = 0.3;
  double mu_x = 0.0;
  double sd_x = 1.0;
  double mu_y = 0.0;
  double sd_y = 1.0;

  int n_y() const noexcept { return n_x * j_per; }

  void validate() const {
    if (n_x < 4) {
      throw InvalidDimension("n_x must be >= 4, got " + std::to_string(n_x));
    }
    if (j_per < 4) {
      throw InvalidDimension("j_per must be >= 4, got " + std::to_string(j_per));
    }
    if (!(eps > 0.0) || !std::isfinite(eps)) {
      throw ConfigError("eps must be positive and finite");
    }
    if (!(sd_x > 0.0) || !(sd_y > 0.0)) {
      throw ConfigError("climatological standard deviations must be positive");
    }
    for (double v : {f_x, f_y, lambda_x, lambda_y, mu_x, mu_y, sd_x, sd_y}) {
      if (!std::isfinite(v)) throw ConfigError("non-finite Lorenz parameter");
    }
  }

  bool operator==(const LorenzParams&) const = default;
};

}  // namespace stochred
