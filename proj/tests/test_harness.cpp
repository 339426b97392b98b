#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "stochred/harness/commands.hpp"

using namespace stochred;
using namespace stochred::harness;
namespace fs = std::filesystem;

namespace {

// Small and fast; climatology given so nothing long runs.
Json tiny_config_json() {
  return Json{{"name", "tiny"},
              {"params",
               {{"n_x", 8}, {"j_per", 4}, {"eps", 0.1}, {"mu_x", 2.015}, {"sd_x", 2.834},
                {"mu_y", 3.088}, {"sd_y", 6.315}}},
              {"lambda", 0.3},
              {"t_avg", 50.0},
              {"spinup", 10.0},
              {"calibration", {{"t_total", 3000.0}, {"dt", 0.02}, {"stride", 1}}},
              {"max_lag", 5.0},
              {"n_bins", 40}};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("stochred_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const Json& j) {
  const auto path = dir / "config.json";
  write_text_file(path, j.dump());
  return path;
}

}  // namespace

TEST_CASE("an empty config gives the documented defaults", "[harness][config]") {
  const auto c = config_from_json(Json::object());
  REQUIRE(c.params.n_x == 20);
  REQUIRE(c.params.j_per == 4);
  REQUIRE(c.t_avg == 10000.0);
  REQUIRE(c.dt_reduced == 0.005);
  REQUIRE(c.sample_interval == 0.05);
  REQUIRE(c.n_bins == 200);
  REQUIRE(c.max_lag == 10.0);
  REQUIRE(c.models.size() == 3);
  REQUIRE(c.regimes.size() == 4);
  REQUIRE_FALSE(c.climatology_given);

  auto small = config_from_json(Json{{"params", {{"eps", 0.01}}}});
  REQUIRE(small.effective_dt_full() == 0.0005);
  small = config_from_json(Json{{"params", {{"eps", 0.5}}}});
  REQUIRE(small.effective_dt_full() == 0.005);
}

TEST_CASE("bad configs are rejected as config errors", "[harness][config]") {
  const Json bad[] = {
      Json::array(),
      Json{{"unknown", 1}},
      Json{{"params", {{"n_x", 3}}}},
      Json{{"params", {{"eps", -0.1}}}},
      Json{{"params", {{"mu_x", 1.0}}}},
      Json{{"models", {"stochastic", "quantum"}}},
      Json{{"dt_reduced", 0.003}},
      Json{{"t_avg", "long"}},
      Json{{"x_star", {1.0, 2.0}}},
      Json{{"climatology", {{"mu_x", 1.0}}}},
      Json{{"calibration", {{"seed", 3}}}},
      Json{{"t_avg", 5.0}},
  };
  for (const auto& j : bad) {
    INFO(j.dump());
    REQUIRE_THROWS_AS(config_from_json(j), ConfigError);
  }
}

TEST_CASE("config echo reflects overrides", "[harness][config]") {
  auto j = tiny_config_json();
  j["models"] = {"zero_order"};
  j["seed"] = 42;
  const auto c = config_from_json(j);
  const Json echo = config_to_json(c);
  REQUIRE(echo["seed"] == 42);
  REQUIRE(echo["models"] == Json{"zero_order"});
  REQUIRE(echo["params"]["lambda_y"] == 0.3);
  REQUIRE(echo["climatology"] == "given");
  REQUIRE_FALSE(echo["calibration"].contains("seed"));
}

TEST_CASE("CSV cells use 17 significant digits and CRLF", "[harness][csv]") {
  CsvTable t({"grid", "a,b"});
  t.add_row({0.1, 1.0 / 3.0});
  t.add_row({-2.5e-300, std::nullopt});
  const std::string s = t.str();
  REQUIRE(s == "grid,\"a,b\"\r\n0.10000000000000001,0.33333333333333331\r\n-2.5e-300,\r\n");
  REQUIRE(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  REQUIRE_THROWS_AS(t.add_row({1.0}), InvalidDimension);
}

TEST_CASE("stored series round-trip exactly", "[harness][io]") {
  const auto dir = scratch("series");
  Eigen::MatrixXd m(7, 3);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = std::sin(1.7 * static_cast<double>(k)) / 3.0;
  save_series(dir / "s.bin", m, 0.05);
  const auto back = load_series(dir / "s.bin");
  REQUIRE(back.samples == m);
  REQUIRE(back.sample_dt == 0.05);
  write_text_file(dir / "junk.bin", "not a series");
  REQUIRE_THROWS_AS(load_series(dir / "junk.bin"), ConfigError);
}

TEST_CASE("seeds are derived per tag", "[harness]") {
  const SeedSet a{1}, b{2};
  REQUIRE(a.of("full") != a.of("stochastic"));
  REQUIRE(a.of("full") != b.of("full"));
  REQUIRE(a.to_json()["full"] == a.of("full"));
}

TEST_CASE("a small run produces every model on shared grids", "[harness][run]") {
  const auto c = config_from_json(tiny_config_json());
  const auto r = run_experiment(c, std::nullopt, "", 1);
  REQUIRE(r.autocalibrated);
  REQUIRE_FALSE(r.any_failed());
  REQUIRE(r.models.size() == 4);
  const auto rows = static_cast<Eigen::Index>(50.0 / 0.05) + 1;
  for (const auto& m : r.models) {
    INFO(m.name);
    REQUIRE(m.ok);
    REQUIRE(m.series.rows() == rows);
    REQUIRE(m.series.cols() == 8);
    REQUIRE(m.diag->corr.lags == r.model("full").diag->corr.lags);
    if (m.name != "full") REQUIRE(m.errors.has_value());
  }
  // x* defaults to the mean of the full-model run
  REQUIRE(r.artifact.x_star.isApprox(r.model("full").series.colwise().mean().transpose(), 1e-14));

  const auto dens = density_table(r).str();
  REQUIRE(dens.rfind("grid,full,stochastic,deterministic,zero_order\r\n", 0) == 0);
  const Json report = run_report_json(r);
  for (const char* row : {"density", "corr", "cross_corr", "energy_corr"}) {
    for (const char* col : {"stochastic", "deterministic", "zero_order"}) {
      REQUIRE(report["errors"][row][col].is_number());
    }
  }
  REQUIRE(report["random_source"] == std::string(kRandomSource));
}

TEST_CASE("disabling a model leaves the others unchanged", "[harness][run]") {
  auto j = tiny_config_json();
  const auto all = run_experiment(config_from_json(j), std::nullopt, "", 1);
  j["models"] = {"stochastic"};
  const auto one = run_experiment(config_from_json(j), std::nullopt, "", 1);
  REQUIRE(one.model("stochastic").series == all.model("stochastic").series);
  REQUIRE(one.model("stochastic").errors->density_err == all.model("stochastic").errors->density_err);
  REQUIRE_FALSE(one.model("deterministic").enabled);
  REQUIRE(run_report_json(one)["errors"]["density"]["deterministic"].is_null());
  // disabled models leave empty cells
  const auto csv = harness::detail::curve_table(one, &ModelDiagnostics::corr).str();
  REQUIRE(csv.find(",,\r\n") != std::string::npos);
}

TEST_CASE("no fast-to-slow coupling gives zero noise", "[harness][run]") {
  auto j = tiny_config_json();
  j["params"]["lambda_y"] = 0.0;
  j.erase("lambda");
  j["params"]["lambda_x"] = 0.3;
  const auto r = run_experiment(config_from_json(j), std::nullopt, "", 1);
  REQUIRE(r.artifact.sigma.isZero(0.0));
  REQUIRE(r.artifact.s_mat.isZero(0.0));
}

TEST_CASE("run twice, same bytes", "[harness][cli]") {
  const auto dir = scratch("determinism");
  const auto cfg = write_config(dir, tiny_config_json());
  std::ostringstream log;
  CommandArgs a{cfg, std::nullopt, dir / "first", std::nullopt, std::nullopt};
  REQUIRE(cmd_run(a, log) == kExitOk);
  a.out = dir / "second";
  REQUIRE(cmd_run(a, log) == kExitOk);
  for (const char* f : {"density.csv", "autocorrelation.csv", "cross_correlation.csv",
                        "energy_correlation.csv", "report.json", "artifact.json"}) {
    INFO(f);
    REQUIRE(read_text_file(dir / "first" / f) == read_text_file(dir / "second" / f));
  }
  a.out = dir / "reseeded";
  a.seed = 99;
  REQUIRE(cmd_run(a, log) == kExitOk);
  REQUIRE(read_text_file(dir / "first" / "density.csv") != read_text_file(dir / "reseeded" / "density.csv"));
}

TEST_CASE("calibrate, then run from the artifact", "[harness][cli]") {
  const auto dir = scratch("calibrate");
  const auto cfg = write_config(dir, tiny_config_json());
  std::ostringstream log;
  CommandArgs a{cfg, std::nullopt, dir / "cal", std::nullopt, std::nullopt};
  REQUIRE(cmd_calibrate(a, log) == kExitOk);
  const auto art_path = dir / "cal" / "artifact.json";
  const auto art = load_artifact(art_path);
  REQUIRE(artifact_to_string(art) == read_text_file(art_path));

  CommandArgs run{cfg, std::nullopt, dir / "run", art_path, std::nullopt};
  REQUIRE(cmd_run(run, log) == kExitOk);
  CommandArgs again{cfg, std::nullopt, dir / "auto", std::nullopt, std::nullopt};
  REQUIRE(cmd_run(again, log) == kExitOk);
  // same seeds, so the supplied and the self-made artifact agree
  REQUIRE(read_text_file(dir / "run" / "density.csv") == read_text_file(dir / "auto" / "density.csv"));

  // an artifact for other parameters is refused
  auto other = tiny_config_json();
  other["lambda"] = 0.35;
  CommandArgs mismatch{write_config(dir, other), std::nullopt, dir / "bad", art_path, std::nullopt};
  REQUIRE(cmd_run(mismatch, log) == kExitConfig);
}

TEST_CASE("stats recomputes diagnostics from stored series", "[harness][cli]") {
  const auto dir = scratch("stats");
  const auto cfg = write_config(dir, tiny_config_json());
  std::ostringstream log;
  REQUIRE(cmd_run({cfg, std::nullopt, dir / "run", std::nullopt, std::nullopt}, log) == kExitOk);
  REQUIRE(cmd_stats({cfg, std::nullopt, dir / "stats", std::nullopt, dir / "run"}, log) == kExitOk);
  REQUIRE(read_text_file(dir / "run" / "autocorrelation.csv") ==
          read_text_file(dir / "stats" / "autocorrelation.csv"));
  const Json s = Json::parse(read_text_file(dir / "stats" / "stats.json"));
  const Json r = Json::parse(read_text_file(dir / "run" / "report.json"));
  REQUIRE(s["errors"] == r["errors"]);
  REQUIRE(cmd_stats({cfg, std::nullopt, dir / "empty", std::nullopt, dir / "nothing"}, log) == kExitConfig);
}

TEST_CASE("exit codes separate config errors from numerical failures", "[harness][cli]") {
  const auto dir = scratch("exit");
  std::ostringstream log, err;
  write_text_file(dir / "broken.json", "{ not json");
  REQUIRE(cmd_run({dir / "broken.json", std::nullopt, dir / "o", std::nullopt, std::nullopt}, log) ==
          kExitConfig);
  REQUIRE(cmd_run({dir / "missing.json", std::nullopt, dir / "o", std::nullopt, std::nullopt}, log) ==
          kExitConfig);
  const auto cfg = write_config(dir, tiny_config_json());
  REQUIRE(cmd_run({cfg, std::nullopt, "", std::nullopt, std::nullopt}, log) == kExitConfig);

  // Euler-Maruyama with a huge step blows up; the other models still report
  auto j = tiny_config_json();
  j["dt_reduced"] = 0.5;
  j["sample_interval"] = 0.5;
  j["t_avg"] = 200.0;
  const auto unstable = write_config(dir, j);
  REQUIRE(cmd_run({unstable, std::nullopt, dir / "blow", std::nullopt, std::nullopt}, log) ==
          kExitNumerical);
  const Json report = Json::parse(read_text_file(dir / "blow" / "report.json"));
  REQUIRE(report["models"]["stochastic"]["status"] == "failed");
  REQUIRE(report["models"]["deterministic"]["status"] == "ok");
  REQUIRE(report["errors"]["corr"]["stochastic"].is_null());

  REQUIRE(guarded([]() -> int { throw NumericalBlowup(3, 0.1, "x"); }, err) == kExitNumerical);
  REQUIRE(guarded([]() -> int { throw NotPositiveSemidefinite(-1.0, "x"); }, err) == kExitNumerical);
  REQUIRE(guarded([]() -> int { throw InvalidDimension("x"); }, err) == kExitConfig);
}

TEST_CASE("worker cap comes from the environment", "[harness]") {
  ::setenv(kThreadsEnv, "3", 1);
  REQUIRE(thread_cap() == 3);
  ::setenv(kThreadsEnv, "zero", 1);
  REQUIRE(thread_cap() >= 1);
  ::unsetenv(kThreadsEnv);

  std::vector<int> out(20, 0);
  std::vector<std::function<void()>> tasks;
  for (int i = 0; i < 20; ++i) tasks.push_back([&out, i] { out[static_cast<std::size_t>(i)] = i * i; });
  run_tasks(tasks, 4);
  for (int i = 0; i < 20; ++i) REQUIRE(out[static_cast<std::size_t>(i)] == i * i);
  tasks.push_back([] { throw DegenerateData("late"); });
  REQUIRE_THROWS_AS(run_tasks(tasks, 4), DegenerateData);
}

TEST_CASE("table checks: ordering and factor of two", "[harness][tables]") {
  REQUIRE(published_for(0.35, 0.01).has_value());
  REQUIRE_FALSE(published_for(0.4, 0.1).has_value());
  const auto pub = *published_for(0.3, 0.1);

  RegimeOutcome o;
  o.regime = {"x", 0.3, 0.1};
  RunResult r;
  r.models.resize(4);
  r.models[0].name = "full";
  for (int col = 0; col < 3; ++col) {
    auto& m = r.models[static_cast<std::size_t>(col + 1)];
    m.name = std::string(to_string(kTableColumns[col]));
    m.enabled = m.ok = true;
    // published values times 1.5, except one cell at 3x
    m.errors = ErrorReport{1.5 * pub.values[0][col], 1.5 * pub.values[1][col],
                           1.5 * pub.values[2][col], 1.5 * pub.values[3][col]};
  }
  r.models[3].errors->energy_corr_err = 3.0 * pub.values[3][2];
  o.result = r;
  auto chk = check_regime(o);
  REQUIRE(chk.complete);
  REQUIRE(chk.density_ordering);
  REQUIRE(chk.compared == 12);
  REQUIRE(chk.within_factor_two == 11);

  o.result->models[1].errors->density_err = 1.0;
  REQUIRE_FALSE(check_regime(o).density_ordering);
  const auto text = tables_text({o});
  REQUIRE(text.find("10 of 12") != std::string::npos);
}

TEST_CASE("table reproduction reuses matching artifacts", "[harness][tables]") {
  const auto dir = scratch("tables");
  auto j = tiny_config_json();
  j["regimes"] = {{{"name", "a"}, {"lambda", 0.3}, {"eps", 0.1}},
                  {{"name", "b"}, {"lambda", 0.35}, {"eps", 0.1}}};
  const auto cfg = write_config(dir, j);
  std::ostringstream log;
  CommandArgs a{cfg, std::nullopt, dir / "out", std::nullopt, std::nullopt};
  REQUIRE(cmd_reproduce_tables(a, log) == kExitOk);
  REQUIRE(fs::exists(dir / "out" / "a" / "artifact.json"));
  REQUIRE_FALSE(fs::exists(dir / "out" / "a" / "series_full.bin"));
  Json t = Json::parse(read_text_file(dir / "out" / "tables.json"));
  REQUIRE(t["regimes"].size() == 2);
  REQUIRE(t["regimes"][0]["autocalibrated"] == true);
  REQUIRE(t["regimes"][0]["errors"]["density"]["stochastic"].contains("published"));

  const auto first = read_text_file(dir / "out" / "b" / "density.csv");
  REQUIRE(cmd_reproduce_tables(a, log) == kExitOk);
  t = Json::parse(read_text_file(dir / "out" / "tables.json"));
  REQUIRE(t["regimes"][0]["autocalibrated"] == false);
  REQUIRE(read_text_file(dir / "out" / "b" / "density.csv") == first);
}
