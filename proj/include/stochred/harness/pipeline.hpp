#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "stochred/artifact_io.hpp"
#include "stochred/calibration.hpp"
#include "stochred/harness/config.hpp"
#include "stochred/harness/io.hpp"
#include "stochred/harness/parallel.hpp"
#include "stochred/random.hpp"
#include "stochred/reduced.hpp"
#include "stochred/stats.hpp"

#ifndef STOCHRED_VERSION
#define STOCHRED_VERSION "0.0.0"
#endif

namespace stochred::harness {

inline constexpr const char* kReportFormat = "stochred.run_report";
inline constexpr int kReportVersion = 1;
inline constexpr const char* kModelColumns[] = {"full", "stochastic", "deterministic", "zero_order"};

/// Every random stream of an experiment, derived from one root seed by tag.
struct SeedSet {
  std::uint64_t root = 1;

  std::uint64_t of(std::string_view tag) const { return derive_seed(root, tag); }

  Json to_json() const {
    Json j{{"root", root}};
    for (const char* tag : {"climatology_x", "climatology_y", "calibration", "full", "stochastic",
                            "deterministic", "zero_order", "reduced_start"}) {
      j[tag] = of(tag);
    }
    return j;
  }
};

/// Fills mu/sd of the params from climatology runs unless the config gave them.
inline void resolve_climatology(ExperimentConfig& c) {
  if (c.climatology_given) return;
  const SeedSet seeds{c.seed};
  const auto& r = c.climatology_run;
  const auto cx = calibrate_climatology(c.params.f_x, c.params.n_x, r.t_avg, r.dt, r.spinup,
                                        seeds.of("climatology_x"));
  const auto cy = calibrate_climatology(c.params.f_y, c.params.n_y(), r.t_avg, r.dt, r.spinup,
                                        seeds.of("climatology_y"));
  c.params.mu_x = cx.mean;
  c.params.sd_x = cx.std;
  c.params.mu_y = cy.mean;
  c.params.sd_y = cy.std;
  c.climatology_given = true;
  c.climatology_computed = true;
}

/// Slow-variable samples of the full two-scale model, one row per sample.
/// The whole state starts from standard normal draws.
inline Matrix simulate_full(const ExperimentConfig& c, std::uint64_t seed) {
  const auto& p = c.params;
  const double dt = c.effective_dt_full();
  const auto plan =
      SamplingPlan::from_times(c.spinup + c.t_avg, c.spinup, dt, sample_stride(c.sample_interval, dt));
  TwoScaleField field(p);
  NormalSource rng(seed);
  SeriesRecorder rec(plan.sample_count(), p.n_x);
  try {
    run_rk4(field, rng.vector(field.dim()), plan,
            [&](const VectorRef& s) { rec(s.head(p.n_x)); });
  } catch (const NumericalBlowup& e) {
    throw NumericalBlowup(e.step(), e.time(), std::string("full model: ") + e.what());
  }
  return std::move(rec).take();
}

/// Limiting-run calibration at x*, with seeds and provenance from the config.
inline CalibrationArtifact calibrate_at(const ExperimentConfig& c, const Vector& x_star,
                                        const std::string& x_star_source) {
  LimitingRunOptions run = c.calibration;
  run.seed = SeedSet{c.seed}.of("calibration");
  auto a = build_artifact(c.params, SlowState{x_star}, run, c.truncation);
  a.metadata.x_star_source = x_star_source;
  if (x_star_source == "full_run") {
    a.metadata.x_star_t_avg = c.t_avg;
    a.metadata.x_star_seed = SeedSet{c.seed}.of("full");
  }
  return a;
}

/// x* from the config, or the mean of a full-model series.
inline std::pair<Vector, std::string> choose_x_star(const ExperimentConfig& c,
                                                    const Matrix* full_series) {
  if (c.x_star) return {*c.x_star, "config"};
  if (!full_series) throw ConfigError("x_star needs either a config value or a full-model run");
  return {full_series->colwise().mean().transpose(), "full_run"};
}

/// Rejects an artifact made for different parameters.
inline void check_artifact_matches(const CalibrationArtifact& a, const ExperimentConfig& c) {
  if (!(a.metadata.params == c.params)) {
    throw ConfigError("artifact parameters do not match the config (lambda, eps, forcing, "
                      "dimensions and climatology must agree)");
  }
}

struct ModelDiagnostics {
  DensityEstimate density;
  CorrelationCurve corr;
  CorrelationCurve cross;
  CorrelationCurve energy;
  double pooled_mean = 0.0;
  double pooled_second_moment = 0.0;
  int density_peaks = 0;
  double corr_at_lag2 = 0.0;
};

inline ModelDiagnostics diagnose(const Matrix& series, double sample_dt, int bins, double max_lag) {
  ModelDiagnostics d;
  d.density = density(series, bins);
  d.corr = autocorrelation(series, sample_dt, max_lag);
  d.cross = cross_correlation(series, sample_dt, max_lag);
  d.energy = energy_autocorrelation(series, sample_dt, max_lag);
  d.pooled_mean = pooled_mean(series);
  d.pooled_second_moment = series.squaredNorm() / static_cast<double>(series.size());
  d.density_peaks = count_prominent_peaks(d.density.pdf);
  d.corr_at_lag2 = max_lag >= 2.0 ? stochred::detail::interpolate(d.corr.lags, d.corr.values, 2.0)
                                  : std::numeric_limits<double>::quiet_NaN();
  return d;
}

inline ErrorReport compare(const ModelDiagnostics& test, const ModelDiagnostics& ref) {
  return {relative_error(test.density, ref.density), relative_error(test.corr, ref.corr),
          relative_error(test.cross, ref.cross), relative_error(test.energy, ref.energy)};
}

/// One simulated model inside a run.
struct ModelOutcome {
  std::string name;
  bool enabled = false;
  bool ok = false;
  std::string failure;
  Matrix series;
  double sample_dt = 0.0;
  std::optional<ModelDiagnostics> diag;
  std::optional<ErrorReport> errors;  // reduced models only
  double seconds = 0.0;
};

struct RunResult {
  ExperimentConfig config;
  SeedSet seeds;
  CalibrationArtifact artifact;
  std::string artifact_source;  // path it was loaded from, or "calibrated"
  bool autocalibrated = false;
  std::vector<ModelOutcome> models;  // full, then the reduced kinds
  double seconds = 0.0;

  const ModelOutcome& model(std::string_view name) const {
    for (const auto& m : models) {
      if (m.name == name) return m;
    }
    throw ConfigError("no model named " + std::string(name));
  }

  bool any_failed() const {
    for (const auto& m : models) {
      if (m.enabled && !m.ok) return true;
    }
    return false;
  }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Fills diagnostics and error rows for all models that produced series.
inline void compute_diagnostics(RunResult& r, unsigned workers) {
  const auto& c = r.config;
  std::vector<std::function<void()>> tasks;
  for (auto& m : r.models) {
    if (!m.ok) continue;
    tasks.push_back([&m, &c] {
      try {
        m.diag = diagnose(m.series, m.sample_dt, c.n_bins, c.max_lag);
      } catch (const Error& e) {
        m.ok = false;
        m.failure = std::string("diagnostics: ") + e.what();
      }
    });
  }
  run_tasks(tasks, workers);
  const auto& full = r.models.front();
  if (!full.ok) throw DegenerateData("full model diagnostics failed: " + full.failure);
  for (auto& m : r.models) {
    if (&m == &full || !m.ok) continue;
    try {
      m.errors = compare(*m.diag, *full.diag);
    } catch (const Error& e) {
      m.ok = false;
      m.failure = std::string("comparison: ") + e.what();
    }
  }
}

/// Full pipeline for one parameter set: full-model reference, calibration
/// (unless an artifact is supplied), the enabled reduced models and the
/// diagnostics. Reduced-model blow-ups are recorded, not thrown.
inline RunResult run_experiment(ExperimentConfig c, std::optional<CalibrationArtifact> artifact,
                                std::string artifact_source, unsigned workers) {
  const auto t0 = std::chrono::steady_clock::now();
  resolve_climatology(c);
  c.validate();
  RunResult r;
  r.config = c;
  r.seeds = SeedSet{c.seed};

  ModelOutcome full;
  full.name = "full";
  full.enabled = true;
  {
    const auto t = std::chrono::steady_clock::now();
    full.series = simulate_full(c, r.seeds.of("full"));
    full.sample_dt = c.sample_interval;
    full.ok = true;
    full.seconds = detail::seconds_since(t);
  }

  if (artifact) {
    check_artifact_matches(*artifact, c);
    r.artifact = std::move(*artifact);
    r.artifact_source = std::move(artifact_source);
  } else {
    const auto [x_star, source] = choose_x_star(c, &full.series);
    r.artifact = calibrate_at(c, x_star, source);
    r.artifact_source = "calibrated";
    r.autocalibrated = true;
  }
  r.models.push_back(std::move(full));

  for (ModelKind k : kAllReducedKinds) {
    ModelOutcome m;
    m.name = std::string(to_string(k));
    m.enabled = c.model_enabled(k);
    m.sample_dt = c.sample_interval;
    r.models.push_back(std::move(m));
  }

  const Vector x0 = perturbed_start(r.artifact.x_star, r.seeds.of("reduced_start"),
                                    c.reduced_start_amplitude);
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 1; i < r.models.size(); ++i) {
    auto& m = r.models[i];
    if (!m.enabled) continue;
    tasks.push_back([&m, &r, &c, &x0] {
      const auto t = std::chrono::steady_clock::now();
      ReducedModelSpec spec;
      spec.kind = *parse_model_kind(m.name);
      spec.artifact = r.artifact;
      spec.params = c.params;
      ReducedRunOptions o;
      o.t_avg = c.t_avg;
      o.spinup = c.spinup;
      o.dt = c.dt_reduced;
      o.sample_interval = c.sample_interval;
      o.seed = r.seeds.of(m.name);
      try {
        m.series = simulate_reduced(ReducedModel(spec), x0, o);
        m.ok = true;
      } catch (const NumericalBlowup& e) {
        m.failure = e.what();
      }
      m.seconds = detail::seconds_since(t);
    });
  }
  run_tasks(tasks, workers);
  compute_diagnostics(r, workers);
  r.seconds = detail::seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Output files

inline Json error_report_to_json(const ErrorReport& e) {
  return Json{{"density", e.density_err},
              {"corr", e.corr_err},
              {"cross_corr", e.cross_corr_err},
              {"energy_corr", e.energy_corr_err}};
}

/// Rows density / corr / cross_corr / energy_corr, columns stochastic /
/// deterministic / zero_order; null where a model is missing.
inline Json error_table_json(const RunResult& r) {
  Json table = Json::object();
  for (const char* row : {"density", "corr", "cross_corr", "energy_corr"}) {
    Json cols = Json::object();
    for (ModelKind k : kAllReducedKinds) {
      const auto& m = r.model(to_string(k));
      cols[std::string(to_string(k))] =
          m.errors ? error_report_to_json(*m.errors)[row] : Json(nullptr);
    }
    table[row] = cols;
  }
  return table;
}

inline Json artifact_summary_json(const RunResult& r) {
  const auto& md = r.artifact.metadata;
  return Json{{"source", r.artifact_source},
              {"autocalibrated", r.autocalibrated},
              {"x_star_source", md.x_star_source},
              {"tau_trunc", md.tau_trunc},
              {"decay_met", md.decay_met},
              {"noise_floor", md.noise_floor},
              {"trunc_threshold", md.trunc_threshold},
              {"clamped_eigenvalues", md.clamped_eigenvalues},
              {"c0_condition", md.c0_condition}};
}

/// Report of one run. Wall-clock times live in a separate file so that the
/// report itself is reproducible.
inline Json run_report_json(const RunResult& r) {
  Json models = Json::object();
  for (const auto& m : r.models) {
    Json mj{{"status", !m.enabled ? "disabled" : (m.ok ? "ok" : "failed")}};
    if (!m.failure.empty()) mj["failure"] = m.failure;
    if (m.diag) {
      mj["samples"] = m.series.rows();
      mj["pooled_mean"] = m.diag->pooled_mean;
      mj["pooled_second_moment"] = m.diag->pooled_second_moment;
      mj["density_peaks"] = m.diag->density_peaks;
      mj["corr_at_lag2"] = m.diag->corr_at_lag2;
    }
    if (m.errors) mj["errors"] = error_report_to_json(*m.errors);
    models[m.name] = mj;
  }
  return Json{{"format", kReportFormat},
              {"version", kReportVersion},
              {"software", {{"name", "stochred"}, {"version", STOCHRED_VERSION}}},
              {"name", r.config.name},
              {"config", config_to_json(r.config)},
              {"random_source", std::string(kRandomSource)},
              {"seeds", r.seeds.to_json()},
              {"artifact", artifact_summary_json(r)},
              {"errors", error_table_json(r)},
              {"models", models}};
}

inline Json timing_json(const RunResult& r) {
  Json models = Json::object();
  for (const auto& m : r.models) {
    if (m.enabled) models[m.name] = m.seconds;
  }
  return Json{{"total_seconds", r.seconds}, {"models", models}};
}

namespace detail {

inline const ModelOutcome* column_model(const RunResult& r, const char* name) {
  const auto& m = r.model(name);
  return m.diag ? &m : nullptr;
}

inline CsvTable curve_table(const RunResult& r, CorrelationCurve ModelDiagnostics::*which) {
  const auto& ref = (*r.model("full").diag).*which;
  CsvTable t({"grid", "full", "stochastic", "deterministic", "zero_order"});
  for (Eigen::Index k = 0; k < ref.lags.size(); ++k) {
    std::vector<std::optional<double>> row{ref.lags[k]};
    for (const char* name : kModelColumns) {
      const auto* m = column_model(r, name);
      if (!m) {
        row.emplace_back();
        continue;
      }
      const auto& c = (*m->diag).*which;
      row.emplace_back(c.lags.size() == ref.lags.size() && c.lags[k] == ref.lags[k]
                           ? c.values[k]
                           : stochred::detail::interpolate(c.lags, c.values, ref.lags[k]));
    }
    t.add_row(std::move(row));
  }
  return t;
}

}  // namespace detail

/// Densities on the union of all bin edges; the grid column holds cell centers.
inline CsvTable density_table(const RunResult& r) {
  std::vector<const DensityEstimate*> ds;
  for (const char* name : kModelColumns) {
    if (const auto* m = detail::column_model(r, name)) ds.push_back(&m->diag->density);
  }
  const Eigen::VectorXd edges = union_grid(ds);
  std::vector<std::optional<Eigen::VectorXd>> cols;
  for (const char* name : kModelColumns) {
    const auto* m = detail::column_model(r, name);
    cols.push_back(m ? std::optional(rebin(m->diag->density, edges)) : std::nullopt);
  }
  CsvTable t({"grid", "full", "stochastic", "deterministic", "zero_order"});
  for (Eigen::Index k = 0; k + 1 < edges.size(); ++k) {
    std::vector<std::optional<double>> row{0.5 * (edges[k] + edges[k + 1])};
    for (const auto& c : cols) row.push_back(c ? std::optional((*c)[k]) : std::nullopt);
    t.add_row(std::move(row));
  }
  return t;
}

inline void write_diagnostic_csvs(const RunResult& r, const std::filesystem::path& dir) {
  write_text_file(dir / "density.csv", density_table(r).str());
  write_text_file(dir / "autocorrelation.csv", detail::curve_table(r, &ModelDiagnostics::corr).str());
  write_text_file(dir / "cross_correlation.csv",
                  detail::curve_table(r, &ModelDiagnostics::cross).str());
  write_text_file(dir / "energy_correlation.csv",
                  detail::curve_table(r, &ModelDiagnostics::energy).str());
}

inline std::filesystem::path series_path(const std::filesystem::path& dir, const std::string& model) {
  return dir / ("series_" + model + ".bin");
}

/// CSVs, report.json, timing.json and (if configured) the sampled series.
inline void write_run_outputs(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_diagnostic_csvs(r, dir);
  write_text_file(dir / "report.json", run_report_json(r).dump(2) + "\n");
  write_text_file(dir / "timing.json", timing_json(r).dump(2) + "\n");
  if (r.autocalibrated) save_artifact(r.artifact, dir / "artifact.json");
  if (r.config.save_series.value_or(true)) {
    for (const auto& m : r.models) {
      if (m.ok) save_series(series_path(dir, m.name), m.series, m.sample_dt);
    }
  }
}

/// Rebuilds a run result from stored series (for re-analysis with other
/// bin counts or lag windows). Missing reduced-model files count as disabled.
inline RunResult result_from_series(const ExperimentConfig& c, const std::filesystem::path& dir) {
  RunResult r;
  r.config = c;
  r.seeds = SeedSet{c.seed};
  r.artifact_source = "stored series";
  for (const char* name : kModelColumns) {
    ModelOutcome m;
    m.name = name;
    const auto path = series_path(dir, name);
    if (std::filesystem::exists(path)) {
      auto s = load_series(path);
      m.series = std::move(s.samples);
      m.sample_dt = s.sample_dt;
      m.enabled = m.ok = true;
    } else if (m.name == "full") {
      throw ConfigError("no full-model series in " + dir.string());
    }
    r.models.push_back(std::move(m));
  }
  return r;
}

}  // namespace stochred::harness
