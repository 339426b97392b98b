#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stochred/calibration.hpp"
#include "stochred/error.hpp"
#include "stochred/params.hpp"

namespace stochred {

using Json = nlohmann::json;

inline constexpr const char* kArtifactFormat = "stochred.calibration_artifact";
inline constexpr int kArtifactVersion = 1;

namespace detail {

// Doubles are written in shortest round-trip form, which recovers every bit.
inline Json vector_to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline double number_at(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

inline Vector vector_from_json(const Json& j, const std::string& name) {
  if (!j.is_array()) throw ConfigError(name + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = number_at(j[i], name);
  }
  return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& name) {
  if (!j.is_array()) throw ConfigError(name + ": expected an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ConfigError(name + ": ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = number_at(j[i][k], name);
    }
  }
  return m;
}

template <class T>
void read_if_present(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline Json params_to_json(const LorenzParams& p) {
  return Json{{"n_x", p.n_x},     {"j_per", p.j_per},       {"eps", p.eps},
              {"f_x", p.f_x},     {"f_y", p.f_y},           {"lambda_x", p.lambda_x},
              {"lambda_y", p.lambda_y}, {"mu_x", p.mu_x},   {"sd_x", p.sd_x},
              {"mu_y", p.mu_y},   {"sd_y", p.sd_y}};
}

/// Missing keys keep the values already in `p`.
inline void params_from_json(const Json& j, LorenzParams& p) {
  if (!j.is_object()) throw ConfigError("params must be an object");
  detail::read_if_present(j, "n_x", p.n_x);
  detail::read_if_present(j, "j_per", p.j_per);
  detail::read_if_present(j, "eps", p.eps);
  detail::read_if_present(j, "f_x", p.f_x);
  detail::read_if_present(j, "f_y", p.f_y);
  detail::read_if_present(j, "lambda_x", p.lambda_x);
  detail::read_if_present(j, "lambda_y", p.lambda_y);
  detail::read_if_present(j, "mu_x", p.mu_x);
  detail::read_if_present(j, "sd_x", p.sd_x);
  detail::read_if_present(j, "mu_y", p.mu_y);
  detail::read_if_present(j, "sd_y", p.sd_y);
}

inline Json run_options_to_json(const LimitingRunOptions& o) {
  return Json{{"t_total", o.t_total}, {"spinup", o.spinup},         {"dt", o.dt},
              {"stride", o.stride},   {"time_scale", o.time_scale}, {"seed", o.seed},
              {"init_amplitude", o.init_amplitude}};
}

inline void run_options_from_json(const Json& j, LimitingRunOptions& o) {
  if (!j.is_object()) throw ConfigError("run options must be an object");
  detail::read_if_present(j, "t_total", o.t_total);
  detail::read_if_present(j, "spinup", o.spinup);
  detail::read_if_present(j, "dt", o.dt);
  detail::read_if_present(j, "stride", o.stride);
  detail::read_if_present(j, "time_scale", o.time_scale);
  detail::read_if_present(j, "seed", o.seed);
  detail::read_if_present(j, "init_amplitude", o.init_amplitude);
}

inline Json truncation_to_json(const TruncationRule& r) {
  return Json{{"tol_decay", r.tol_decay},       {"sustain", r.sustain},
              {"max_lag", r.max_lag},           {"noise_factor", r.noise_factor},
              {"noise_cap", r.noise_cap}};
}

inline void truncation_from_json(const Json& j, TruncationRule& r) {
  if (!j.is_object()) throw ConfigError("truncation must be an object");
  detail::read_if_present(j, "tol_decay", r.tol_decay);
  detail::read_if_present(j, "sustain", r.sustain);
  detail::read_if_present(j, "max_lag", r.max_lag);
  detail::read_if_present(j, "noise_factor", r.noise_factor);
  detail::read_if_present(j, "noise_cap", r.noise_cap);
}

inline Json artifact_to_json(const CalibrationArtifact& a) {
  const auto& m = a.metadata;
  Json meta{{"params", params_to_json(m.params)},
            {"run", run_options_to_json(m.run)},
            {"truncation", truncation_to_json(m.truncation)},
            {"tau_trunc", m.tau_trunc},
            {"decay_met", m.decay_met},
            {"noise_floor", m.noise_floor},
            {"trunc_threshold", m.trunc_threshold},
            {"clamped_eigenvalues", m.clamped_eigenvalues},
            {"c0_condition", m.c0_condition},
            {"samples", m.samples},
            {"sample_dt", m.sample_dt},
            {"x_star_source", m.x_star_source},
            {"x_star_t_avg", m.x_star_t_avg},
            {"x_star_seed", m.x_star_seed}};
  return Json{{"format", kArtifactFormat},
              {"version", kArtifactVersion},
              {"x_star", detail::vector_to_json(a.x_star)},
              {"z_mean", detail::vector_to_json(a.z_mean)},
              {"c0", detail::matrix_to_json(a.c0)},
              {"cbar", detail::matrix_to_json(a.cbar)},
              {"r_mat", detail::matrix_to_json(a.r_mat)},
              {"s_mat", detail::matrix_to_json(a.s_mat)},
              {"sigma", detail::matrix_to_json(a.sigma)},
              {"metadata", std::move(meta)}};
}

inline CalibrationArtifact artifact_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", std::string()) != kArtifactFormat) {
    throw ConfigError("not a calibration artifact");
  }
  if (j.value("version", 0) != kArtifactVersion) {
    throw ConfigError("unsupported artifact version");
  }
  for (const char* key : {"x_star", "z_mean", "c0", "cbar", "r_mat", "s_mat", "sigma", "metadata"}) {
    if (!j.contains(key)) throw ConfigError(std::string("artifact is missing '") + key + "'");
  }
  CalibrationArtifact a;
  a.x_star = detail::vector_from_json(j["x_star"], "x_star");
  a.z_mean = detail::vector_from_json(j["z_mean"], "z_mean");
  a.c0 = detail::matrix_from_json(j["c0"], "c0");
  a.cbar = detail::matrix_from_json(j["cbar"], "cbar");
  a.r_mat = detail::matrix_from_json(j["r_mat"], "r_mat");
  a.s_mat = detail::matrix_from_json(j["s_mat"], "s_mat");
  a.sigma = detail::matrix_from_json(j["sigma"], "sigma");

  const Json& mj = j["metadata"];
  auto& m = a.metadata;
  if (mj.contains("params")) params_from_json(mj["params"], m.params);
  if (mj.contains("run")) run_options_from_json(mj["run"], m.run);
  if (mj.contains("truncation")) truncation_from_json(mj["truncation"], m.truncation);
  detail::read_if_present(mj, "tau_trunc", m.tau_trunc);
  detail::read_if_present(mj, "decay_met", m.decay_met);
  detail::read_if_present(mj, "noise_floor", m.noise_floor);
  detail::read_if_present(mj, "trunc_threshold", m.trunc_threshold);
  detail::read_if_present(mj, "clamped_eigenvalues", m.clamped_eigenvalues);
  detail::read_if_present(mj, "c0_condition", m.c0_condition);
  detail::read_if_present(mj, "samples", m.samples);
  detail::read_if_present(mj, "sample_dt", m.sample_dt);
  detail::read_if_present(mj, "x_star_source", m.x_star_source);
  detail::read_if_present(mj, "x_star_t_avg", m.x_star_t_avg);
  detail::read_if_present(mj, "x_star_seed", m.x_star_seed);

  const auto nx = static_cast<Eigen::Index>(m.params.n_x);
  const auto ny = static_cast<Eigen::Index>(m.params.n_y());
  if (a.x_star.size() != nx || a.z_mean.size() != ny || a.c0.rows() != ny || a.c0.cols() != ny ||
      a.cbar.rows() != ny || a.r_mat.rows() != ny || a.s_mat.rows() != nx ||
      a.sigma.rows() != nx || a.sigma.cols() != nx) {
    throw ConfigError("artifact matrix sizes do not match its parameters");
  }
  return a;
}

inline std::string artifact_to_string(const CalibrationArtifact& a) {
  return artifact_to_json(a).dump(1) + "\n";
}

inline CalibrationArtifact artifact_from_string(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("artifact is not valid JSON: ") + e.what());
  }
  return artifact_from_json(j);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_artifact(const CalibrationArtifact& a, const std::filesystem::path& path) {
  write_text_file(path, artifact_to_string(a));
}

inline CalibrationArtifact load_artifact(const std::filesystem::path& path) {
  return artifact_from_string(read_text_file(path));
}

}  // namespace stochred
