#include <CLI11.hpp>

#include <iostream>

#include "stochred/harness/commands.hpp"

using namespace stochred::harness;

namespace {

void common_options(CLI::App* sub, CommandArgs& args) {
  sub->add_option("--config", args.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", args.seed, "root seed, overrides the config");
  sub->add_option("--out", args.out, "output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic reduced models of the two-scale Lorenz 96 system"};
  app.set_version_flag("--version", STOCHRED_VERSION);
  app.require_subcommand(1);

  CommandArgs args;
  auto* calibrate = app.add_subcommand("calibrate", "build a calibration artifact");
  common_options(calibrate, args);

  auto* run = app.add_subcommand("run", "simulate the full and reduced models and compare them");
  common_options(run, args);
  run->add_option("--artifact", args.artifact, "calibration artifact; calibrates when omitted")
      ->check(CLI::ExistingFile);

  auto* stats = app.add_subcommand("stats", "recompute diagnostics from stored series");
  common_options(stats, args);
  stats->add_option("--input", args.input, "directory with series files (default: --out)")
      ->check(CLI::ExistingDirectory);

  auto* tables = app.add_subcommand("reproduce-tables", "run every regime and tabulate the errors");
  common_options(tables, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (calibrate->parsed()) return cmd_calibrate(args);
  if (run->parsed()) return cmd_run(args);
  if (stats->parsed()) return cmd_stats(args);
  return cmd_reproduce_tables(args);
}
