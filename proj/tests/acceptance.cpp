// Acceptance run: one PASS/FAIL line per criterion, plus INFO lines with the
// numbers behind them. Usage: acceptance <work-dir> [<stochred-cli>]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stochred/harness/commands.hpp"

using namespace stochred;
using namespace stochred::harness;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  std::string name;
  bool pass;
  std::string detail;
  double seconds;
};

std::vector<Verdict> verdicts;

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void verdict(const std::string& name, bool pass, const std::string& detail,
             std::chrono::steady_clock::time_point t0) {
  verdicts.push_back({name, pass, detail, since(t0)});
  std::printf("%s  %s: %s  [%.1f s]\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str(),
              verdicts.back().seconds);
  std::fflush(stdout);
}

void info(const std::string& text) {
  std::printf("INFO  %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

void square_root_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  bool symmetric = true;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix g(20, 20);
    for (auto& v : g.reshaped()) v = nd(rng);
    const Matrix s = g * g.transpose() / 20.0 + 1e-3 * Matrix::Identity(20, 20);
    const Matrix sigma = psd_square_root(s).sigma;
    worst = std::max(worst, rel_frobenius(sigma * sigma.transpose(), s));
    symmetric = symmetric && sigma == sigma.transpose();
  }
  verdict("matrix square root", worst < 1e-10 && symmetric,
          fmt("worst relative Frobenius error %.3g", worst) +
              (symmetric ? ", sigma exactly symmetric" : ", sigma NOT symmetric"),
          t0);
}

void energy_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 3.0);
  double worst = 0.0;
  for (const auto& r : default_regimes()) {
    LorenzParams p;
    p.lambda_x = p.lambda_y = r.lambda;
    p.eps = r.eps;
    for (int trial = 0; trial < 250; ++trial) {
      Vector x(p.n_x), y(p.n_y());
      for (auto& v : x) v = nd(rng);
      for (auto& v : y) v = nd(rng);
      worst = std::max(worst, std::abs(coupling_energy_rate(SlowState{x}, FastState{y}, p)));
    }
  }
  verdict("coupling-energy conservation", worst < 1e-12,
          fmt("largest |coupling dE/dt| over 1000 states %.3g", worst), t0);
}

struct Decay {
  void operator()(const VectorRef& x, Eigen::Ref<Vector> out) const { out = -x; }
};

void rk4_order_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const double dts[] = {0.1, 0.05, 0.025, 0.0125};
  std::vector<double> lx, ly;
  for (double dt : dts) {
    Vector x = Vector::Ones(1);
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    for (int k = 0; k < steps; ++k) x = rk4_step(Decay{}, x, dt);
    lx.push_back(std::log(dt));
    ly.push_back(std::log(std::abs(x[0] - std::exp(-1.0))));
  }
  // least-squares slope of log error against log dt
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) mx += lx[k] / 4.0, my += ly[k] / 4.0;
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  const double slope = sxy / sxx;
  verdict("RK4 order", slope >= 3.9, fmt("convergence slope %.4f", slope), t0);
}

void gaussian_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd z(1000000, 1);
  for (auto& v : z.reshaped()) v = nd(rng);
  const auto k = energy_autocorrelation(z, 0.01, 10.0);
  const double lo = k.values.minCoeff(), hi = k.values.maxCoeff();
  verdict("Gaussian benchmark K(s)", lo >= 0.95 && hi <= 1.05,
          fmt("K in [%.4f, ", lo) + fmt("%.4f] over s <= 10", hi), t0);
}

const RegimeOutcome* find_regime(const std::vector<RegimeOutcome>& os, double lambda, double eps) {
  for (const auto& o : os) {
    if (std::abs(o.regime.lambda - lambda) < 1e-12 && std::abs(o.regime.eps - eps) < 1e-12) return &o;
  }
  return nullptr;
}

void table_check(const std::vector<RegimeOutcome>& outcomes, std::chrono::steady_clock::time_point t0) {
  bool ordering = true;
  int within = 0, compared = 0;
  bool complete = outcomes.size() == 4;
  std::string misses;
  for (const auto& o : outcomes) {
    const auto chk = check_regime(o);
    ordering = ordering && chk.density_ordering;
    complete = complete && chk.complete;
    within += chk.within_factor_two;
    compared += chk.compared;
    info(o.regime.name + ": density ordering " + (chk.density_ordering ? "holds" : "violated") + ", " +
         std::to_string(chk.within_factor_two) + "/" + std::to_string(chk.compared) +
         " within a factor of two" + (o.result ? "" : " (run failed: " + o.failure + ")"));
    const auto pub = published_for(o.regime.lambda, o.regime.eps);
    if (!o.result || !pub) continue;
    for (int row = 0; row < 4; ++row) {
      for (int col = 0; col < 3; ++col) {
        const auto v = table_entry(*o.result, row, kTableColumns[col]);
        const double ratio = v ? *v / pub->values[row][col] : NAN;
        if (!(ratio >= 0.5 && ratio <= 2.0)) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "%s %s/%s ratio %.3g", o.regime.name.c_str(), kTableRows[row],
                        std::string(to_string(kTableColumns[col])).c_str(), ratio);
          info(std::string("outside factor two: ") + buf);
        }
      }
    }
  }
  std::ostringstream d;
  d << "density ordering in all regimes: " << (ordering ? "yes" : "no") << "; " << within << "/"
    << compared << " values within a factor of two";
  verdict("table reproduction", complete && ordering && within == 48 && compared == 48, d.str(), t0);
}

void qualitative_check(const std::vector<RegimeOutcome>& outcomes) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto* weak_eps01 = find_regime(outcomes, 0.35, 0.1);
  const auto* weak_eps001 = find_regime(outcomes, 0.35, 0.01);
  if (!weak_eps01 || !weak_eps01->result || !weak_eps001 || !weak_eps001->result) {
    verdict("qualitative regime behaviour", false, "weak-mixing regimes did not run", t0);
    return;
  }
  const auto& a = *weak_eps01->result;
  const auto& b = *weak_eps001->result;
  const auto* sto_a = a.model("stochastic").diag ? &*a.model("stochastic").diag : nullptr;
  const auto* det_a = a.model("deterministic").diag ? &*a.model("deterministic").diag : nullptr;
  const auto* sto_b = b.model("stochastic").diag ? &*b.model("stochastic").diag : nullptr;
  const auto* det_b = b.model("deterministic").diag ? &*b.model("deterministic").diag : nullptr;
  if (!sto_a || !det_a || !sto_b || !det_b) {
    verdict("qualitative regime behaviour", false, "a reduced model failed", t0);
    return;
  }
  info("density peaks (lambda 0.35, eps 0.1): full " +
       std::to_string(a.model("full").diag->density_peaks) + ", stochastic " +
       std::to_string(sto_a->density_peaks) + ", deterministic " + std::to_string(det_a->density_peaks));
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "autocorrelation at lag 2 (lambda 0.35, eps 0.01): full %.4f, stochastic %.4f, "
                "deterministic %.4f",
                b.model("full").diag->corr_at_lag2, sto_b->corr_at_lag2, det_b->corr_at_lag2);
  info(buf);
  const bool smoother = sto_a->density_peaks < det_a->density_peaks;
  // The lag-2 lobe is negative in this regime, so decay is judged on |C(2)|.
  const bool slower = std::abs(sto_b->corr_at_lag2) > std::abs(det_b->corr_at_lag2);
  verdict("qualitative regime behaviour", smoother && slower,
          std::string("fewer density peaks: ") + (smoother ? "yes" : "no") +
              ", larger |autocorrelation| at lag 2: " + (slower ? "yes" : "no"),
          t0);
}

void eps_independence_check(const std::vector<RegimeOutcome>& outcomes) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto* base = find_regime(outcomes, 0.3, 0.1);
  if (!base || !base->result) {
    verdict("eps-independence of S", false, "base regime did not run", t0);
    return;
  }
  const auto& r = *base->result;
  const auto& one = r.artifact;  // time_scale 1, calibration seed of the run
  LimitingRunOptions run = one.metadata.run;
  run.time_scale = 2.0;
  const auto two = build_artifact(r.config.params, SlowState{one.x_star}, run, one.metadata.truncation);
  const double diff = rel_frobenius(two.s_mat, one.s_mat);
  verdict("eps-independence of S", diff <= 0.1,
          fmt("fast clock x1 vs x2 at t_total = 10000, same noise stream: relative Frobenius "
              "difference %.3g",
              diff),
          t0);

  // the same comparison with an independent initial condition shows the
  // sampling scatter of S at this run length
  run.seed = derive_seed(r.seeds.root, "calibration_independent");
  const auto indep = build_artifact(r.config.params, SlowState{one.x_star}, run, one.metadata.truncation);
  info(fmt("x2 clock with an independent initial state: relative Frobenius difference %.3g",
           rel_frobenius(indep.s_mat, one.s_mat)));
  if (const auto* other = find_regime(outcomes, 0.3, 0.01); other && other->result) {
    info(fmt("artifacts of eps = 0.1 and eps = 0.01 (lambda 0.3): relative Frobenius difference "
             "of S %.3g",
             rel_frobenius(other->result->artifact.s_mat, one.s_mat)));
  }
}

void determinism_check(const fs::path& work, const std::string& cli, const ExperimentConfig& base) {
  const auto t0 = std::chrono::steady_clock::now();
  Json j = config_to_json(base);
  j.erase("regimes");
  j["name"] = "determinism";
  j["climatology"] = {{"mu_x", base.params.mu_x},
                      {"sd_x", base.params.sd_x},
                      {"mu_y", base.params.mu_y},
                      {"sd_y", base.params.sd_y}};
  j["params"].erase("mu_x");
  j["params"].erase("sd_x");
  j["params"].erase("mu_y");
  j["params"].erase("sd_y");
  j["params"]["lambda_x"] = j["params"]["lambda_y"] = 0.3;
  j["params"]["eps"] = 0.1;
  j["t_avg"] = 500.0;
  j["calibration"] = {{"t_total", 3000.0}, {"dt", 0.02}, {"stride", 1}};
  j["save_series"] = false;
  const auto dir = work / "determinism";
  fs::remove_all(dir);
  write_text_file(dir / "config.json", j.dump(2));
  int codes[2];
  for (int k = 0; k < 2; ++k) {
    const auto out = dir / (k == 0 ? "first" : "second");
    const std::string cmd = "\"" + cli + "\" run --config \"" + (dir / "config.json").string() +
                            "\" --seed 5 --out \"" + out.string() + "\" > /dev/null";
    codes[k] = std::system(cmd.c_str());
  }
  bool same = codes[0] == 0 && codes[1] == 0;
  for (const char* f : {"density.csv", "autocorrelation.csv", "cross_correlation.csv",
                        "energy_correlation.csv"}) {
    if (!same) break;
    same = read_text_file(dir / "first" / f) == read_text_file(dir / "second" / f);
  }
  verdict("determinism", same,
          codes[0] == 0 && codes[1] == 0 ? (same ? "two run invocations wrote byte-identical CSVs"
                                                 : "CSV bytes differ between invocations")
                                         : "a run invocation failed",
          t0);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  const std::string cli = argc > 2 ? argv[2] : "stochred";
  fs::create_directories(work);

  square_root_check();
  energy_check();
  rk4_order_check();
  gaussian_benchmark();

  try {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig base = config_from_json(Json::object());
    base.save_series = false;
    resolve_climatology(base);
    info(fmt("climatology mu_x %.6g, ", base.params.mu_x) + fmt("sd_x %.6g, ", base.params.sd_x) +
         fmt("mu_y %.6g, ", base.params.mu_y) + fmt("sd_y %.6g", base.params.sd_y));
    fs::remove_all(work / "tables");
    const auto outcomes = reproduce_tables(base, work / "tables", thread_cap());
    std::cout << tables_text(outcomes);
    info("seeds: root " + std::to_string(base.seed) + ", streams in each regime's report.json");
    table_check(outcomes, t0);
    qualitative_check(outcomes);
    eps_independence_check(outcomes);
    determinism_check(work, cli, base);
  } catch (const std::exception& e) {
    std::printf("FAIL  acceptance harness aborted: %s\n", e.what());
    return 1;
  }

  int failed = 0;
  for (const auto& v : verdicts) failed += v.pass ? 0 : 1;
  std::printf("\n%zu criteria, %d passed, %d failed\n", verdicts.size(),
              static_cast<int>(verdicts.size()) - failed, failed);
  return failed == 0 ? 0 : 1;
}
