#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "stochred/harness/pipeline.hpp"
#include "stochred/harness/tables.hpp"

namespace stochred::harness {

enum ExitCode : int { kExitOk = 0, kExitNumerical = 1, kExitConfig = 2 };

/// Command-line inputs shared by all subcommands.
struct CommandArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::filesystem::path out;
  std::optional<std::filesystem::path> artifact;  // run only
  std::optional<std::filesystem::path> input;     // stats only
};

inline ExperimentConfig load_command_config(const CommandArgs& a) {
  ExperimentConfig c = a.config.empty() ? config_from_json(Json::object()) : load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (a.out.empty()) throw ConfigError("an output directory is required");
  return c;
}

/// Maps library errors to exit codes: 2 for configuration problems, 1 for
/// numerical failures.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err = std::cerr) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidDimension& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

inline int cmd_calibrate(const CommandArgs& a, std::ostream& log = std::cout) {
  return guarded([&] {
    ExperimentConfig c = load_command_config(a);
    resolve_climatology(c);
    std::optional<Matrix> full;
    if (!c.x_star) full = simulate_full(c, SeedSet{c.seed}.of("full"));
    const auto [x_star, source] = choose_x_star(c, full ? &*full : nullptr);
    const auto art = calibrate_at(c, x_star, source);
    const auto path = a.out / "artifact.json";
    save_artifact(art, path);
    log << "artifact written to " << path.string() << " (tau_trunc = " << art.metadata.tau_trunc
        << ", clamped eigenvalues = " << art.metadata.clamped_eigenvalues << ")\n";
    return int{kExitOk};
  });
}

inline int cmd_run(const CommandArgs& a, std::ostream& log = std::cout) {
  return guarded([&] {
    const ExperimentConfig c = load_command_config(a);
    std::optional<CalibrationArtifact> art;
    std::string source;
    if (a.artifact) {
      art = load_artifact(*a.artifact);
      source = a.artifact->string();
    }
    const auto r = run_experiment(c, std::move(art), source, thread_cap());
    write_run_outputs(r, a.out);
    if (r.autocalibrated) log << "no artifact given; calibrated during the run\n";
    for (const auto& m : r.models) {
      if (m.enabled && !m.ok) log << m.name << " failed: " << m.failure << "\n";
    }
    log << "outputs written to " << a.out.string() << "\n";
    return int{r.any_failed() ? kExitNumerical : kExitOk};
  });
}

inline int cmd_stats(const CommandArgs& a, std::ostream& log = std::cout) {
  return guarded([&] {
    const ExperimentConfig c = load_command_config(a);
    const auto in = a.input.value_or(a.out);
    auto r = result_from_series(c, in);
    compute_diagnostics(r, thread_cap());
    write_diagnostic_csvs(r, a.out);
    Json report = run_report_json(r);
    report.erase("artifact");
    write_text_file(a.out / "stats.json", report.dump(2) + "\n");
    log << "diagnostics written to " << a.out.string() << "\n";
    return int{r.any_failed() ? kExitNumerical : kExitOk};
  });
}

inline int cmd_reproduce_tables(const CommandArgs& a, std::ostream& log = std::cout) {
  return guarded([&] {
    ExperimentConfig c = load_command_config(a);
    if (c.regimes.empty()) throw ConfigError("no regimes to reproduce");
    if (!c.save_series) c.save_series = false;
    const auto outcomes = reproduce_tables(c, a.out, thread_cap());
    log << tables_text(outcomes);
    bool failed = false;
    for (const auto& o : outcomes) failed = failed || !o.result || o.result->any_failed();
    return int{failed ? kExitNumerical : kExitOk};
  });
}

}  // namespace stochred::harness
