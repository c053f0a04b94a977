// mfmc: command line front end for the estimators and experiments.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mfmc/harness/commands.hpp"
#include "mfmc/harness/config.hpp"
#include "mfmc/harness/io.hpp"

namespace {

using namespace mfmc;
using namespace mfmc::harness;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<int> level_cap;
  std::optional<int> pilot;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "INI configuration (defaults to the built-in Kuramoto setup)");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--workers", c.workers, "worker threads (0: MFMC_WORKERS or all cores)");
  app->add_option("--level-cap", c.level_cap, "largest level / index-set level");
  app->add_option("--pilot", c.pilot, "pilot samples per key");
}

RunConfig load(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed) cfg.master_seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (c.level_cap) cfg.level_cap = *c.level_cap;
  if (c.pilot) cfg.pilot = *c.pilot;
  cfg.validate();
  return cfg;
}

/// Writes through `body` to `path`, or to stdout when path is empty or "-".
template <class Body>
void emit(const std::string& path, Body&& body) {
  if (path.empty() || path == "-") {
    body(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out = open_output(path);
  body(out);
  finish_output(out, path);
}

std::optional<double> reference_value(const RunConfig& cfg, const std::optional<double>& flag,
                                      const std::string& path) {
  if (flag) return flag;
  const std::string& file = path.empty() ? cfg.reference : path;
  if (file.empty()) return std::nullopt;
  return headline(read_json(file));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field MC / MLMC / MIMC estimators and experiments"};
  app.require_subcommand(1);

  // predict
  double sp = 1.0, st = 2.0, gp = 2.0;
  bool show_table = false;
  auto* predict_cmd = app.add_subcommand("predict", "work complexity laws (a,b) of every method");
  predict_cmd->add_option("--sp", sp, "particle variance rate s_p");
  predict_cmd->add_option("--st", st, "time variance rate s_t");
  predict_cmd->add_option("--gp", gp, "particle cost exponent gamma_p");
  predict_cmd->add_flag("--table1", show_table, "print the full matrix over s_t, gamma_p in {1, 2}");

  // rates
  Common rates_common;
  std::string rates_kind = "time", rates_out;
  int rates_levels = 5;
  std::int64_t rates_M = 10000;
  auto* rates_cmd = app.add_subcommand("rates", "level / index difference statistics with fitted log2 slopes");
  add_common(rates_cmd, rates_common);
  rates_cmd->add_option("--kind", rates_kind,
                        "time | particle-subset | particle-partition | joint | mixed-diagonal | mixed-grid");
  rates_cmd->add_option("--levels", rates_levels, "largest level (or index component)");
  rates_cmd->add_option("-M,--samples", rates_M, "samples per key");
  rates_cmd->add_option("-o,--out", rates_out, "CSV output path (default stdout)");

  // run
  Common run_common;
  std::string run_method_name = "mimc", run_out;
  double run_tol = 0.1;
  auto* run_cmd = app.add_subcommand("run", "one estimator run, JSON report");
  add_common(run_cmd, run_common);
  run_cmd->add_option("-m,--method", run_method_name, "mc | mlmc-n | mlmc-p | mlmc-joint | mimc");
  run_cmd->add_option("-t,--tol", run_tol, "tolerance TOL");
  run_cmd->add_option("-o,--out", run_out, "JSON output path (default stdout)");

  // sweep
  Common sweep_common;
  std::vector<std::string> sweep_methods{"mlmc-joint", "mimc"};
  std::vector<double> sweep_tols;
  int sweep_seeds = 1;
  std::optional<double> sweep_ref;
  std::string sweep_ref_path, sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "work and error over a tolerance sweep, CSV");
  add_common(sweep_cmd, sweep_common);
  sweep_cmd->add_option("-m,--methods", sweep_methods, "methods to run")->delimiter(',');
  sweep_cmd->add_option("--tols", sweep_tols, "tolerances (default: config budget.tols)")->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "seeds per (method, tol)");
  sweep_cmd->add_option("--reference", sweep_ref, "reference value for error_vs_reference");
  sweep_cmd->add_option("--reference-report", sweep_ref_path, "reference JSON report");
  sweep_cmd->add_option("-o,--out", sweep_out, "CSV output path (default stdout)");

  // ppcheck
  Common pp_common;
  std::string pp_method = "mimc", pp_out;
  double pp_tol = 0.1;
  int pp_runs = 200;
  auto* pp_cmd = app.add_subcommand("ppcheck", "repeated runs and a normality check, CSV");
  add_common(pp_cmd, pp_common);
  pp_cmd->add_option("-m,--method", pp_method, "estimator");
  pp_cmd->add_option("-t,--tol", pp_tol, "tolerance TOL");
  pp_cmd->add_option("-R,--runs", pp_runs, "number of runs (>= 50)");
  pp_cmd->add_option("-o,--out", pp_out, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsage;
  }

  std::string json_error_path;
  try {
    if (predict_cmd->parsed()) {
      if (show_table) {
        print_table1(std::cout);
      } else {
        print_predict(std::cout, sp, st, gp);
      }
    } else if (rates_cmd->parsed()) {
      const RunConfig cfg = load(rates_common);
      const RatesResult r = measure_rates(cfg, parse_rates_kind(rates_kind), rates_levels, rates_M, cfg.master_seed);
      emit(rates_out, [&](std::ostream& out) { write_rates_csv(out, r); });
    } else if (run_cmd->parsed()) {
      json_error_path = run_out.empty() ? "-" : run_out;
      const RunConfig cfg = load(run_common);
      const EstimateReport r = run_method(cfg, run_method_name, run_tol, cfg.master_seed);
      emit(run_out, [&](std::ostream& out) { out << report_json(r).dump(2) << "\n"; });
    } else if (sweep_cmd->parsed()) {
      const RunConfig cfg = load(sweep_common);
      const auto tols = sweep_tols.empty() ? cfg.tols : sweep_tols;
      const auto ref = reference_value(cfg, sweep_ref, sweep_ref_path);
      const auto rows = run_sweep(cfg, sweep_methods, tols, sweep_seeds, ref);
      emit(sweep_out, [&](std::ostream& out) { write_sweep_csv(out, rows); });
    } else if (pp_cmd->parsed()) {
      if (pp_runs < 50) throw invalid_input("ppcheck: needs at least 50 runs");
      const RunConfig cfg = load(pp_common);
      const PPCheckResult r = run_ppcheck(cfg, pp_method, pp_tol, pp_runs);
      emit(pp_out, [&](std::ostream& out) { write_ppcheck_csv(out, r); });
      if (!r.ks_distance) std::cerr << "ppcheck: estimates have zero spread; KS check skipped\n";
    }
  } catch (const budget_infeasible& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!json_error_path.empty()) {
      try {
        emit(json_error_path, [&](std::ostream& out) {
          out << error_json("budget_infeasible", e.what(), e.diagnostics()).dump(2) << "\n";
        });
      } catch (const io_error&) {
        return kIoFailure;
      }
    }
    return kBudgetInfeasible;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kSuccess;
}
