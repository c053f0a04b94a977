#pragma once

// Experiment drivers behind the mfmc subcommands. Each driver takes a parsed
// configuration and writes to a stream, so tests can call it without a
// process boundary.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "mfmc/analysis.hpp"
#include "mfmc/estimators.hpp"
#include "mfmc/harness/config.hpp"
#include "mfmc/harness/io.hpp"
#include "mfmc/parallel.hpp"
#include "mfmc/samplers.hpp"

namespace mfmc::harness {

enum ExitCode : int { kSuccess = 0, kUsage = 2, kBudgetInfeasible = 3, kIoFailure = 4 };

// ---------------------------------------------------------------- predict

struct PredictRow {
  MethodRow method;
  ComplexityLaw law;
};

inline std::vector<PredictRow> predict_all(double s_p, double s_t, double gamma_p) {
  if (!(s_t > 0.0)) throw invalid_input("predict: s_t must be positive");
  if (!(s_p >= 0.0)) throw invalid_input("predict: s_p must be >= 0");
  if (!(gamma_p >= 1.0)) throw invalid_input("predict: gamma_p must be >= 1");
  std::vector<PredictRow> rows;
  for (MethodRow m : kMethodRows) rows.push_back({m, predict(m, s_p, s_t, gamma_p)});
  return rows;
}

inline void print_predict(std::ostream& out, double s_p, double s_t, double gamma_p) {
  const auto rows = predict_all(s_p, s_t, gamma_p);
  out << "work = O(TOL^-a log(1/TOL)^b) for s_p=" << format_number(s_p) << " s_t=" << format_number(s_t)
      << " gamma_p=" << format_number(gamma_p) << "\n";
  for (const auto& r : rows) out << std::left << std::setw(28) << to_string(r.method) << to_string(r.law) << "\n";
}

inline void print_table1(std::ostream& out) {
  const auto t = table1();
  out << std::left << std::setw(28) << "method";
  for (const auto& [st, gp] : kMatrixColumns) {
    out << std::setw(18) << ("s_t=" + format_number(st) + ",gamma=" + format_number(gp));
  }
  out << "\n";
  for (std::size_t r = 0; r < kMethodRows.size(); ++r) {
    out << std::setw(28) << to_string(kMethodRows[r]);
    for (const auto& law : t[r]) out << std::setw(18) << to_string(law);
    out << "\n";
  }
}

// ---------------------------------------------------------------- rates

enum class RatesKind { time, particle_subset, particle_partition, joint, mixed_diagonal, mixed_grid };

inline std::string to_string(RatesKind k) {
  switch (k) {
    case RatesKind::time: return "time";
    case RatesKind::particle_subset: return "particle-subset";
    case RatesKind::particle_partition: return "particle-partition";
    case RatesKind::joint: return "joint";
    case RatesKind::mixed_diagonal: return "mixed-diagonal";
    case RatesKind::mixed_grid: return "mixed-grid";
  }
  return "?";
}

inline RatesKind parse_rates_kind(const std::string& name) {
  for (RatesKind k : {RatesKind::time, RatesKind::particle_subset, RatesKind::particle_partition, RatesKind::joint,
                      RatesKind::mixed_diagonal, RatesKind::mixed_grid}) {
    if (to_string(k) == name) return k;
  }
  throw invalid_input("unknown rates kind '" + name + "'");
}

/// Moments of M samples at one key; l2 == -1 for one-parameter kinds.
struct KeyMoments {
  std::array<int, 2> key{0, -1};
  std::size_t particles = 0;
  std::size_t steps = 0;
  std::int64_t M = 0;
  std::vector<double> mean_diff, var_diff, mean_fine, var_fine;
  double work_per_sample = 0.0;
  double wall_seconds = 0.0;
};

struct RatesFit {
  std::string psi;
  std::string quantity;  ///< mean_diff, var_diff or var_fine
  std::optional<RateFit> fit;
};

struct RatesResult {
  RatesKind kind = RatesKind::time;
  std::vector<std::string> psi;
  std::vector<KeyMoments> keys;
  std::vector<RatesFit> fits;
};

namespace detail {

inline KeyMoments moments(std::array<int, 2> key, std::size_t P, std::size_t N, std::vector<DiffSample>& samples) {
  KeyMoments k;
  k.key = key;
  k.particles = P;
  k.steps = N;
  k.M = static_cast<std::int64_t>(samples.size());
  const std::size_t n_obs = samples.front().values.size();
  const double m = static_cast<double>(samples.size());
  auto mean_var = [&](auto get, std::vector<double>& mean, std::vector<double>& var) {
    mean.assign(n_obs, 0.0);
    var.assign(n_obs, 0.0);
    for (std::size_t i = 0; i < n_obs; ++i) {
      double acc = 0.0;
      for (const auto& s : samples) acc += get(s)[i];
      mean[i] = acc / m;
      double ss = 0.0;
      for (const auto& s : samples) ss += (get(s)[i] - mean[i]) * (get(s)[i] - mean[i]);
      var[i] = samples.size() > 1 ? ss / (m - 1.0) : 0.0;
    }
  };
  mean_var([](const DiffSample& s) -> const std::vector<double>& { return s.values; }, k.mean_diff, k.var_diff);
  mean_var([](const DiffSample& s) -> const std::vector<double>& { return s.fine_values; }, k.mean_fine, k.var_fine);
  k.work_per_sample = samples.front().work_units;
  for (const auto& s : samples) k.wall_seconds += s.wall_seconds;
  return k;
}

}  // namespace detail

/// Samples every key of a rates experiment M times. Level 0 of a
/// one-parameter kind is the plain phi at the coarsest discretization.
/// Time differences use P = time_particles (default P0); particle
/// differences use N = particle_steps (default N0).
inline RatesResult measure_rates(const RunConfig& cfg, RatesKind kind, int levels, std::int64_t M,
                                 std::uint64_t seed) {
  if (levels < 0 || levels > cfg.level_cap) throw invalid_input("rates: levels must lie in [0, level_cap]");
  if (M < 2) throw invalid_input("rates: M must be >= 2");
  const KuramotoModel model = cfg.model();
  const QoISpec qoi = cfg.qoi();
  const SamplerContext<KuramotoModel> ctx{model, qoi, cfg.T, cfg.scheme, cfg.gamma_p};
  const Hierarchy& h = cfg.hierarchy;
  const std::size_t P_time = cfg.time_particles ? cfg.time_particles : h.P0;
  const std::size_t N_part = cfg.particle_steps ? cfg.particle_steps : h.N0;
  const std::size_t workers = resolve_workers(cfg.workers);
  const int batch = static_cast<int>(kind) + 1;

  std::vector<std::array<int, 2>> keys;
  if (kind == RatesKind::mixed_grid) {
    for (int a = 0; a <= levels; ++a)
      for (int b = 0; b <= levels; ++b) keys.push_back({a, b});
  } else if (kind == RatesKind::mixed_diagonal) {
    for (int i = 0; i <= levels; ++i) keys.push_back({i, i});
  } else {
    for (int l = 0; l <= levels; ++l) keys.push_back({l, -1});
  }

  RatesResult result;
  result.kind = kind;
  for (const auto& o : qoi.observables) result.psi.push_back(o.name);
  for (const auto& key : keys) {
    const int l = key[0];
    std::size_t P = h.particles(l), N = h.steps(l);
    if (kind == RatesKind::time) P = P_time;
    if (kind == RatesKind::particle_subset || kind == RatesKind::particle_partition) N = N_part;
    if (key[1] >= 0) {
      P = h.particles(key[0]);
      N = h.steps(key[1]);
    }
    std::vector<DiffSample> samples(static_cast<std::size_t>(M));
    parallel_for(samples.size(), workers, [&](std::size_t m) {
      const SampleKey sk = make_sample_key(seed, MethodTag::rates, key[0], std::max(key[1], 0),
                                           static_cast<std::int64_t>(m), batch);
      if (key[1] >= 0) {
        samples[m] = sample_mixed_diff(ctx, key, h, sk);
        return;
      }
      if (l == 0) {
        samples[m] = sample_plain(ctx, P, N, sk);
        return;
      }
      switch (kind) {
        case RatesKind::time: samples[m] = sample_time_diff(ctx, P, N, h.beta_t, sk); break;
        case RatesKind::particle_subset: samples[m] = sample_particle_subset_diff(ctx, P, h.beta_p, N, sk); break;
        case RatesKind::particle_partition:
          samples[m] = sample_particle_partition_diff(ctx, P, h.beta_p, N, sk);
          break;
        default: samples[m] = sample_joint_diff(ctx, P, h.beta_p, N, h.beta_t, sk); break;
      }
    });
    result.keys.push_back(detail::moments(key, P, N, samples));
  }

  if (kind != RatesKind::mixed_grid) {
    for (std::size_t i = 0; i < result.psi.size(); ++i) {
      for (const char* quantity : {"mean_diff", "var_diff", "var_fine"}) {
        std::vector<std::pair<int, double>> pts;
        for (const auto& k : result.keys) {
          const std::string q = quantity;
          const double v = q == "mean_diff" ? k.mean_diff[i] : q == "var_diff" ? k.var_diff[i] : k.var_fine[i];
          pts.emplace_back(k.key[0], v);
        }
        RatesFit f{result.psi[i], quantity, std::nullopt};
        try {
          f.fit = fit_log2_rate(pts);
        } catch (const invalid_input&) {
        }
        result.fits.push_back(f);
      }
    }
  }
  return result;
}

inline const RatesFit* find_fit(const RatesResult& r, const std::string& psi, const std::string& quantity) {
  for (const auto& f : r.fits) {
    if (f.psi == psi && f.quantity == quantity) return &f;
  }
  return nullptr;
}

inline void write_rates_csv(std::ostream& out, const RatesResult& r) {
  CsvWriter csv(out, kRatesSchema,
                {"kind", "l1", "l2", "psi", "M", "mean_diff", "var_diff", "mean_fine", "var_fine", "work_per_sample",
                 "wall_seconds"});
  for (const auto& k : r.keys) {
    for (std::size_t i = 0; i < r.psi.size(); ++i) {
      csv.row() << to_string(r.kind) << k.key[0] << k.key[1] << r.psi[i] << k.M << k.mean_diff[i] << k.var_diff[i]
                << k.mean_fine[i] << k.var_fine[i] << k.work_per_sample << k.wall_seconds;
    }
  }
  for (const auto& f : r.fits) {
    std::string line = "fit,kind=" + to_string(r.kind) + ",psi=" + f.psi + ",quantity=" + f.quantity;
    if (f.fit) {
      line += ",slope=" + format_number(f.fit->slope) + ",intercept=" + format_number(f.fit->intercept) +
              ",residual_rms=" + format_number(f.fit->residual_rms) +
              ",points=" + std::to_string(f.fit->points_used) + ",zero_points=" + std::to_string(f.fit->zero_points);
    } else {
      line += ",slope=nan,unavailable=fewer than 3 non-zero points";
    }
    csv.comment(line);
  }
}

// ---------------------------------------------------------------- run

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"mc", "mlmc-n", "mlmc-p", "mlmc-joint", "mimc"};
  return names;
}

inline void check_method(const std::string& method) {
  const auto& names = method_names();
  if (std::find(names.begin(), names.end(), method) == names.end()) {
    throw invalid_input("unknown method '" + method + "'");
  }
}

/// One estimator run. MC uses the (P_L, N_L) of a joint-difference pilot
/// ladder; the ladder's work is reported as calibration work.
inline EstimateReport run_method(const RunConfig& cfg, const std::string& method, double tol, std::uint64_t seed) {
  check_method(method);
  const KuramotoModel model = cfg.model();
  const QoISpec qoi = cfg.qoi();
  const ErrorBudget budget = cfg.budget(tol);
  const EstimatorSettings settings = cfg.settings(seed);
  if (method == "mc") {
    const Discretization d = calibrate_discretization(model, qoi, budget, cfg.hierarchy, settings);
    EstimateReport r = run_mc(model, qoi, budget, d.particles, d.steps, settings);
    r.calibration_work_units = d.work_units;
    r.final_level = d.level;
    r.max_particle_level = d.level;
    r.max_time_level = d.level;
    return r;
  }
  if (method == "mimc") return run_mimc(model, qoi, budget, cfg.hierarchy, settings);
  const MlmcVariant v = method == "mlmc-n" ? MlmcVariant::time
                        : method == "mlmc-p" ? MlmcVariant::particle
                                             : MlmcVariant::joint;
  return run_mlmc(model, qoi, budget, v, cfg.hierarchy, settings);
}

// ---------------------------------------------------------------- sweep

struct SweepRow {
  std::string method;
  double tol = 0.0;
  std::uint64_t seed = 0;
  double total_work = 0.0;
  double wall_seconds = 0.0;
  double max_sample_work = 0.0;
  int max_level_or_index = 0;
  int max_p_level = 0;
  int max_t_level = 0;
  double estimate = 0.0;
  double error_vs_reference = std::numeric_limits<double>::quiet_NaN();
};

inline SweepRow sweep_row(const EstimateReport& r, double tol, std::uint64_t seed, std::optional<double> reference) {
  SweepRow row;
  row.method = r.method;
  row.tol = tol;
  row.seed = seed;
  row.total_work = r.total_work_units;
  row.wall_seconds = r.total_wall_seconds;
  row.max_sample_work = r.max_sample_work;
  row.max_level_or_index = r.final_level;
  row.max_p_level = r.max_particle_level;
  row.max_t_level = r.max_time_level;
  row.estimate = headline(r);
  if (reference) row.error_vs_reference = std::abs(row.estimate - *reference);
  return row;
}

/// Runs every (method, tol, seed) once; seeds are master_seed + 0 .. n_seeds-1.
inline std::vector<SweepRow> run_sweep(const RunConfig& cfg, const std::vector<std::string>& methods,
                                       const std::vector<double>& tols, int n_seeds,
                                       std::optional<double> reference) {
  if (tols.size() < 2) throw invalid_input("sweep: needs at least two tolerances");
  if (n_seeds < 1) throw invalid_input("sweep: needs at least one seed");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    check_method(m);
    if (!seen.insert(m).second) throw invalid_input("sweep: method '" + m + "' listed twice");
  }
  for (std::size_t i = 1; i < tols.size(); ++i) {
    if (!(tols[i] < tols[i - 1])) throw invalid_input("sweep: tolerances must be strictly decreasing");
  }
  std::vector<SweepRow> rows;
  for (const auto& m : methods) {
    for (double tol : tols) {
      for (int r = 0; r < n_seeds; ++r) {
        const std::uint64_t seed = cfg.master_seed + static_cast<std::uint64_t>(r);
        rows.push_back(sweep_row(run_method(cfg, m, tol, seed), tol, seed, reference));
      }
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  std::set<std::tuple<std::string, double, std::uint64_t>> keys;
  for (const auto& r : rows) {
    if (!keys.emplace(r.method, r.tol, r.seed).second) {
      throw invalid_input("sweep: duplicate row for method " + r.method + ", tol " + format_number(r.tol) +
                          ", seed " + std::to_string(r.seed));
    }
  }
  CsvWriter csv(out, kSweepSchema,
                {"method", "tol", "seed", "total_work", "wall_seconds", "max_sample_work", "max_level_or_index",
                 "max_p_level", "max_t_level", "estimate", "error_vs_reference"});
  for (const auto& r : rows) {
    csv.row() << r.method << r.tol << r.seed << r.total_work << r.wall_seconds << r.max_sample_work
              << r.max_level_or_index << r.max_p_level << r.max_t_level << r.estimate << r.error_vs_reference;
  }
}

// ---------------------------------------------------------------- ppcheck

struct PPCheckResult {
  std::vector<std::pair<std::uint64_t, double>> runs;  ///< (seed, estimate)
  double mean = 0.0;
  double stddev = 0.0;
  std::optional<double> ks_distance;  ///< empty when the sample is degenerate
};

inline PPCheckResult summarize_ppcheck(std::vector<std::pair<std::uint64_t, double>> runs) {
  PPCheckResult r;
  r.runs = std::move(runs);
  const double n = static_cast<double>(r.runs.size());
  for (const auto& [seed, v] : r.runs) r.mean += v;
  r.mean /= n;
  double ss = 0.0;
  for (const auto& [seed, v] : r.runs) ss += (v - r.mean) * (v - r.mean);
  r.stddev = r.runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  if (r.stddev > 0.0) {
    std::vector<double> z;
    for (const auto& [seed, v] : r.runs) z.push_back((v - r.mean) / r.stddev);
    r.ks_distance = ks_distance_normal(z);
  }
  return r;
}

inline PPCheckResult run_ppcheck(const RunConfig& cfg, const std::string& method, double tol, int runs) {
  if (runs < 2) throw invalid_input("ppcheck: needs at least two runs");
  std::vector<std::pair<std::uint64_t, double>> out;
  for (int r = 0; r < runs; ++r) {
    const std::uint64_t seed = cfg.master_seed + static_cast<std::uint64_t>(r);
    out.emplace_back(seed, headline(run_method(cfg, method, tol, seed)));
  }
  return summarize_ppcheck(std::move(out));
}

inline void write_ppcheck_csv(std::ostream& out, const PPCheckResult& r) {
  CsvWriter csv(out, kPPCheckSchema, {"row", "seed", "estimate", "mean", "std", "ks_distance", "degenerate"});
  for (const auto& [seed, v] : r.runs) csv.row() << "run" << seed << v << "" << "" << "" << "";
  const bool degenerate = !r.ks_distance.has_value();
  csv.row() << "summary" << "" << "" << r.mean << r.stddev
            << (degenerate ? std::string("") : format_number(*r.ks_distance)) << (degenerate ? "1" : "0");
}

}  // namespace mfmc::harness
