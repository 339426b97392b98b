#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stochred/artifact_io.hpp"
#include "stochred/calibration.hpp"
#include "stochred/error.hpp"
#include "stochred/params.hpp"
#include "stochred/reduced.hpp"
#include "stochred/stats.hpp"

namespace stochred::harness {

/// Settings of the climatology runs of the uncoupled, unrescaled models.
struct ClimatologyRun {
  double t_avg = 10000.0;
  double dt = 0.005;
  double spinup = 100.0;
};

/// One (lambda, eps) setting of a table reproduction.
struct Regime {
  std::string name;
  double lambda = 0.3;
  double eps = 0.1;
};

inline std::vector<Regime> default_regimes() {
  return {{"lambda0.30_eps0.10", 0.3, 0.1},
          {"lambda0.30_eps0.01", 0.3, 0.01},
          {"lambda0.35_eps0.10", 0.35, 0.1},
          {"lambda0.35_eps0.01", 0.35, 0.01}};
}

/// Declarative description of an experiment. Every field has a default, so
/// an empty JSON object is a valid config.
struct ExperimentConfig {
  std::string name = "experiment";
  LorenzParams params;
  /// Empty: compute (mu, sd) pairs from climatology runs.
  bool climatology_given = false;
  /// Set once the harness filled mu/sd from its own climatology runs.
  bool climatology_computed = false;
  ClimatologyRun climatology_run;

  double t_avg = 10000.0;
  double spinup = 100.0;
  /// <= 0 means min(0.005, 0.05 eps).
  double dt_full = 0.0;
  double dt_reduced = 0.005;
  double sample_interval = 0.05;

  LimitingRunOptions calibration;
  TruncationRule truncation;
  /// Empty: the long-run mean of the full model.
  std::optional<Vector> x_star;
  double reduced_start_amplitude = 1e-3;

  int n_bins = kDefaultBins;
  double max_lag = kDefaultMaxLag;
  std::uint64_t seed = 1;
  std::vector<ModelKind> models = {ModelKind::stochastic, ModelKind::deterministic,
                                   ModelKind::zero_order};
  /// Unset: `run` stores series, `reproduce-tables` does not.
  std::optional<bool> save_series;
  bool smoke = false;
  std::vector<Regime> regimes = default_regimes();

  double effective_dt_full() const {
    return dt_full > 0.0 ? dt_full : std::min(0.005, 0.05 * params.eps);
  }

  bool model_enabled(ModelKind k) const {
    for (ModelKind m : models) {
      if (m == k) return true;
    }
    return false;
  }

  void validate() const {
    params.validate();
    for (double v : {effective_dt_full(), dt_reduced, sample_interval, calibration.dt,
                     climatology_run.dt}) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("all time steps must be positive");
    }
    if (!(t_avg > 0.0) || !(spinup >= 0.0)) throw ConfigError("need t_avg > 0 and spinup >= 0");
    if (!(calibration.t_total > calibration.spinup)) {
      throw ConfigError("calibration t_total must exceed its spinup");
    }
    if (n_bins < 1) throw ConfigError("n_bins must be positive");
    if (!(max_lag > 0.0)) throw ConfigError("max_lag must be positive");
    if (x_star && x_star->size() != params.n_x) throw ConfigError("x_star must have n_x entries");
    (void)sample_stride(sample_interval, effective_dt_full());
    (void)sample_stride(sample_interval, dt_reduced);
    if (max_lag / sample_interval * 2.0 > t_avg / sample_interval + 1.0) {
      throw ConfigError("t_avg must be at least twice max_lag");
    }
  }

  /// Config for one regime of a reproduction: same settings, new (lambda, eps).
  ExperimentConfig for_regime(const Regime& r) const {
    ExperimentConfig c = *this;
    c.name = r.name;
    c.params.lambda_x = c.params.lambda_y = r.lambda;
    c.params.eps = r.eps;
    c.regimes.clear();
    return c;
  }
};

namespace detail {

template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError(std::string("unknown key '") + item.key() + "' in " + where);
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::check_keys(j,
                     {"name", "params", "lambda", "climatology", "climatology_run", "t_avg",
                      "spinup", "dt_full", "dt_reduced", "sample_interval", "calibration",
                      "truncation", "x_star", "reduced_start_amplitude", "n_bins", "max_lag",
                      "seed", "models", "save_series", "smoke", "regimes"},
                     "config");
  ExperimentConfig c;
  detail::read_field(j, "name", c.name);
  if (j.contains("params")) {
    const Json& pj = j["params"];
    if (!pj.is_object()) throw ConfigError("params must be an object");
    detail::check_keys(pj,
                       {"n_x", "j_per", "eps", "f_x", "f_y", "lambda_x", "lambda_y", "mu_x",
                        "sd_x", "mu_y", "sd_y"},
                       "params");
    params_from_json(pj, c.params);
    c.climatology_given = pj.contains("mu_x") || pj.contains("sd_x") || pj.contains("mu_y") ||
                          pj.contains("sd_y");
    if (c.climatology_given &&
        !(pj.contains("mu_x") && pj.contains("sd_x") && pj.contains("mu_y") && pj.contains("sd_y"))) {
      throw ConfigError("give all of mu_x, sd_x, mu_y, sd_y or none of them");
    }
  }
  if (j.contains("lambda")) {
    double lambda = 0.0;
    detail::read_field(j, "lambda", lambda);
    c.params.lambda_x = c.params.lambda_y = lambda;
  }
  if (j.contains("climatology")) {
    const Json& cj = j["climatology"];
    if (cj.is_string() && cj.get<std::string>() == "auto") {
      c.climatology_given = false;
    } else if (cj.is_object()) {
      detail::check_keys(cj, {"mu_x", "sd_x", "mu_y", "sd_y"}, "climatology");
      for (const char* k : {"mu_x", "sd_x", "mu_y", "sd_y"}) {
        if (!cj.contains(k)) throw ConfigError(std::string("climatology is missing ") + k);
      }
      detail::read_field(cj, "mu_x", c.params.mu_x);
      detail::read_field(cj, "sd_x", c.params.sd_x);
      detail::read_field(cj, "mu_y", c.params.mu_y);
      detail::read_field(cj, "sd_y", c.params.sd_y);
      c.climatology_given = true;
    } else {
      throw ConfigError("climatology must be \"auto\" or an object");
    }
  }
  if (j.contains("climatology_run")) {
    const Json& cj = j["climatology_run"];
    detail::check_keys(cj, {"t_avg", "dt", "spinup"}, "climatology_run");
    detail::read_field(cj, "t_avg", c.climatology_run.t_avg);
    detail::read_field(cj, "dt", c.climatology_run.dt);
    detail::read_field(cj, "spinup", c.climatology_run.spinup);
  }
  detail::read_field(j, "smoke", c.smoke);
  if (c.smoke) {
    // shorter defaults for quick checks; explicit fields below still win
    c.t_avg = 2000.0;
    c.calibration.t_total = 2000.0;
  }
  detail::read_field(j, "t_avg", c.t_avg);
  detail::read_field(j, "spinup", c.spinup);
  if (j.contains("dt_full")) {
    if (j["dt_full"].is_string() && j["dt_full"].get<std::string>() == "auto") {
      c.dt_full = 0.0;
    } else {
      detail::read_field(j, "dt_full", c.dt_full);
      if (!(c.dt_full > 0.0)) throw ConfigError("dt_full must be positive or \"auto\"");
    }
  }
  detail::read_field(j, "dt_reduced", c.dt_reduced);
  detail::read_field(j, "sample_interval", c.sample_interval);
  if (j.contains("calibration")) {
    detail::check_keys(j["calibration"],
                       {"t_total", "spinup", "dt", "stride", "time_scale", "init_amplitude"},
                       "calibration");
    run_options_from_json(j["calibration"], c.calibration);
  }
  if (j.contains("truncation")) {
    detail::check_keys(j["truncation"], {"tol_decay", "sustain", "max_lag", "noise_factor", "noise_cap"},
                       "truncation");
    truncation_from_json(j["truncation"], c.truncation);
  }
  if (j.contains("x_star")) {
    const Json& xj = j["x_star"];
    if (xj.is_string() && xj.get<std::string>() == "full_run") {
      c.x_star.reset();
    } else if (xj.is_array()) {
      c.x_star = stochred::detail::vector_from_json(xj, "x_star");
    } else {
      throw ConfigError("x_star must be \"full_run\" or an array");
    }
  }
  detail::read_field(j, "reduced_start_amplitude", c.reduced_start_amplitude);
  detail::read_field(j, "n_bins", c.n_bins);
  detail::read_field(j, "max_lag", c.max_lag);
  detail::read_field(j, "seed", c.seed);
  if (j.contains("models")) {
    if (!j["models"].is_array()) throw ConfigError("models must be an array");
    c.models.clear();
    for (const auto& m : j["models"]) {
      const auto kind = m.is_string() ? parse_model_kind(m.get<std::string>()) : std::nullopt;
      if (!kind) throw ConfigError("unknown model kind in models");
      c.models.push_back(*kind);
    }
  }
  if (j.contains("save_series")) {
    bool v = false;
    detail::read_field(j, "save_series", v);
    c.save_series = v;
  }
  if (j.contains("regimes")) {
    if (!j["regimes"].is_array()) throw ConfigError("regimes must be an array");
    c.regimes.clear();
    for (const auto& rj : j["regimes"]) {
      if (!rj.is_object()) throw ConfigError("each regime must be an object");
      detail::check_keys(rj, {"name", "lambda", "eps"}, "regime");
      Regime r;
      detail::read_field(rj, "lambda", r.lambda);
      detail::read_field(rj, "eps", r.eps);
      char buf[64];
      std::snprintf(buf, sizeof buf, "lambda%.2f_eps%.2f", r.lambda, r.eps);
      r.name = buf;
      detail::read_field(rj, "name", r.name);
      c.regimes.push_back(r);
    }
  }
  try {
    c.validate();
  } catch (const InvalidDimension& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Canonical echo of a config (all defaults filled in).
inline Json config_to_json(const ExperimentConfig& c) {
  Json models = Json::array();
  for (ModelKind k : c.models) models.push_back(std::string(to_string(k)));
  Json regimes = Json::array();
  for (const auto& r : c.regimes) regimes.push_back({{"name", r.name}, {"lambda", r.lambda}, {"eps", r.eps}});
  Json j{{"name", c.name},
         {"params", params_to_json(c.params)},
         {"climatology", c.climatology_computed ? "computed" : (c.climatology_given ? "given" : "auto")},
         {"climatology_run",
          {{"t_avg", c.climatology_run.t_avg}, {"dt", c.climatology_run.dt},
           {"spinup", c.climatology_run.spinup}}},
         {"t_avg", c.t_avg},
         {"spinup", c.spinup},
         {"dt_full", c.effective_dt_full()},
         {"dt_reduced", c.dt_reduced},
         {"sample_interval", c.sample_interval},
         {"calibration", run_options_to_json(c.calibration)},
         {"truncation", truncation_to_json(c.truncation)},
         {"x_star", c.x_star ? stochred::detail::vector_to_json(*c.x_star) : Json("full_run")},
         {"reduced_start_amplitude", c.reduced_start_amplitude},
         {"n_bins", c.n_bins},
         {"max_lag", c.max_lag},
         {"seed", c.seed},
         {"models", models},
         {"save_series", c.save_series ? Json(*c.save_series) : Json("default")},
         {"smoke", c.smoke},
         {"regimes", regimes}};
  j["calibration"].erase("seed");  // derived from the root seed
  return j;
}

}  // namespace stochred::harness
