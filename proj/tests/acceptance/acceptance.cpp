// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Rates and sweep tables are written
// to results/ for plotting.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "mfmc/harness/commands.hpp"

namespace {

using namespace mfmc;
using namespace mfmc::harness;

const std::string kSource = MFMC_SOURCE_DIR;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

bool in_range(double v, double lo, double hi) { return v >= lo && v <= hi; }

RunConfig base_config() {
  RunConfig cfg = load_config(kSource + "/configs/kuramoto.ini");
  cfg.workers = 0;
  return cfg;
}

std::string results_path(const std::string& name) {
  std::filesystem::create_directories(kSource + "/results");
  return kSource + "/results/" + name;
}

void save_rates(const RatesResult& r) {
  const std::string path = results_path("rates_" + to_string(r.kind) + ".csv");
  std::ofstream out = open_output(path);
  write_rates_csv(out, r);
  finish_output(out, path);
}

double slope_of(const RatesResult& r, const std::string& psi, const std::string& quantity) {
  const RatesFit* f = find_fit(r, psi, quantity);
  if (!f || !f->fit) return std::numeric_limits<double>::quiet_NaN();
  return f->fit->slope;
}

/// Least-squares slope of y against x.
double regress(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

// ------------------------------------------------------------------ 1

Verdict predictor() {
  Verdict v;
  const std::array<std::array<ComplexityLaw, 4>, 5> expected{{
      {{{3, 0}, {4, 0}, {3, 0}, {4, 0}}},
      {{{2, 2}, {3, 2}, {2, 0}, {3, 0}}},
      {{{3, 0}, {3, 2}, {3, 0}, {3, 2}}},
      {{{2, 2}, {3, 0}, {2, 2}, {3, 0}}},
      {{{2, 2}, {2, 4}, {2, 0}, {2, 2}}},
  }};
  const auto t = table1();
  int matched = 0;
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 4; ++c) matched += t[r][c] == expected[r][c] ? 1 : 0;
  }
  v.detail << matched << "/20 entries match; mimc(1,2,2) = " << to_string(mimc_complexity(1, 2, 2));
  v.check(matched == 20, "matrix");
  v.check(mimc_complexity(1, 2, 2) == ComplexityLaw{2, 2}, "mimc(1,2,2)");
  return v;
}

// ------------------------------------------------------------------ 2

Verdict weak_rates() {
  Verdict v;
  const RunConfig cfg = base_config();
  const RatesResult time = measure_rates(cfg, RatesKind::time, 5, 100000, cfg.master_seed);
  const RatesResult part = measure_rates(cfg, RatesKind::particle_partition, 5, 100000, cfg.master_seed);
  save_rates(time);
  save_rates(part);
  // E[sin] vanishes by symmetry, so the mean slopes are read from cos.
  const double st = slope_of(time, "cos", "mean_diff"), sp = slope_of(part, "cos", "mean_diff");
  v.detail << "time slope " << format_number(st) << ", partition slope " << format_number(sp) << " (cos, M=1e5)";
  v.check(in_range(st, -1.3, -0.7), "time");
  v.check(in_range(sp, -1.3, -0.7), "partition");
  return v;
}

// ------------------------------------------------------------------ 3

Verdict variance_rates() {
  Verdict v;
  const RunConfig cfg = base_config();
  const std::uint64_t seed = cfg.master_seed + 1;
  const RatesResult time = measure_rates(cfg, RatesKind::time, 5, 10000, seed);
  const RatesResult part = measure_rates(cfg, RatesKind::particle_partition, 5, 10000, seed);
  const RatesResult sub = measure_rates(cfg, RatesKind::particle_subset, 5, 10000, seed);
  save_rates(sub);
  const double st = slope_of(time, "cos", "var_diff");
  const double sp = slope_of(part, "cos", "var_diff");
  const double ss = slope_of(sub, "cos", "var_diff");
  const double sf = slope_of(part, "cos", "var_fine");
  v.detail << "time " << format_number(st) << ", partition " << format_number(sp) << ", subset "
           << format_number(ss) << ", plain vs P " << format_number(sf) << " (cos, M=1e4)";
  v.check(in_range(st, -2.4, -1.6), "time");
  v.check(in_range(sp, -2.4, -1.6), "partition");
  v.check(in_range(ss, -1.3, -0.7), "subset");
  v.check(in_range(sf, -1.3, -0.7), "plain");
  return v;
}

// ------------------------------------------------------------------ 4

Verdict mixed_rates() {
  Verdict v;
  const RunConfig cfg = base_config();
  const RatesResult r = measure_rates(cfg, RatesKind::mixed_diagonal, 4, 10000, cfg.master_seed + 2);
  save_rates(r);
  const double sm = slope_of(r, "cos", "mean_diff"), sv = slope_of(r, "cos", "var_diff");
  v.detail << "mean slope " << format_number(sm) << ", variance slope " << format_number(sv) << " (cos, M=1e4); |mean| by i:";
  for (const auto& k : r.keys) v.detail << " " << format_number(std::abs(k.mean_diff[0]));
  v.check(in_range(sm, -2.6, -1.4), "mean");
  v.check(in_range(sv, -4.8, -3.2), "variance");
  return v;
}

// ------------------------------------------------------------------ 5

double reference_value(const RunConfig& cfg) {
  const std::string path = kSource + "/results/reference_tol0.01.json";
  if (std::filesystem::exists(path)) return headline(read_json(path));
  const EstimateReport r = run_method(cfg, "mimc", 0.01, cfg.master_seed);
  std::ofstream out = open_output(path);
  out << report_json(r).dump(2) << "\n";
  finish_output(out, path);
  return headline(r);
}

Verdict tolerance_attainment() {
  Verdict v;
  const RunConfig cfg = base_config();
  const double ref = reference_value(cfg);
  v.detail << "reference " << format_number(ref) << ";";
  for (const char* method : {"mlmc-joint", "mimc"}) {
    int hits = 0;
    for (int r = 0; r < 20; ++r) {
      const double e = headline(run_method(cfg, method, 0.1, 1000 + static_cast<std::uint64_t>(r)));
      hits += std::abs(e - ref) <= 0.1 ? 1 : 0;
    }
    v.detail << " " << method << " " << hits << "/20";
    v.check(hits >= 18, method);
  }
  return v;
}

// ------------------------------------------------------------------ 6, 7

struct SweepSummary {
  std::vector<SweepRow> rows;
};

const SweepSummary& sweep() {
  static const SweepSummary s = [] {
    RunConfig cfg = base_config();
    cfg.master_seed = 2000;
    SweepSummary out;
    const double ref = reference_value(cfg);
    out.rows = run_sweep(cfg, {"mlmc-joint", "mimc"}, {0.2, 0.1, 0.05, 0.025, 0.0125}, 5, ref);
    const std::string path = results_path("sweep.csv");
    std::ofstream f = open_output(path);
    write_sweep_csv(f, out.rows);
    finish_output(f, path);
    return out;
  }();
  return s;
}

double sweep_slope(const std::string& method, double SweepRow::*field) {
  std::vector<double> x, y;
  for (const auto& r : sweep().rows) {
    if (r.method != method) continue;
    x.push_back(std::log(1.0 / r.tol));
    y.push_back(std::log(r.*field));
  }
  return regress(x, y);
}

double mean_at(const std::string& method, double tol, double SweepRow::*field) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : sweep().rows) {
    if (r.method == method && r.tol == tol) {
      sum += r.*field;
      ++n;
    }
  }
  return sum / n;
}

Verdict work_scaling() {
  Verdict v;
  const double sl = sweep_slope("mlmc-joint", &SweepRow::total_work);
  const double sm = sweep_slope("mimc", &SweepRow::total_work);
  const double wl = mean_at("mlmc-joint", 0.0125, &SweepRow::total_work);
  const double wm = mean_at("mimc", 0.0125, &SweepRow::total_work);
  v.detail << "mlmc-joint slope " << format_number(sl) << ", mimc slope " << format_number(sm)
           << "; work at 0.0125: mimc " << format_number(wm) << " vs mlmc-joint " << format_number(wl)
           << " (5 seeds per tol)";
  v.check(in_range(sl, 2.6, 3.4), "mlmc-joint slope");
  v.check(sm <= 2.6, "mimc slope");
  v.check(wm < wl, "work at smallest tol");
  return v;
}

Verdict max_sample_work() {
  Verdict v;
  const double sl = sweep_slope("mlmc-joint", &SweepRow::max_sample_work);
  const double sm = sweep_slope("mimc", &SweepRow::max_sample_work);
  v.detail << "mlmc-joint slope " << format_number(sl) << ", mimc slope " << format_number(sm);
  v.check(sm < sl, "slope ordering");
  return v;
}

// ------------------------------------------------------------------ 8

Verdict exactness() {
  Verdict v;
  int checks = 0;
  auto expect = [&](bool ok, const std::string& what) {
    ++checks;
    v.check(ok, what);
  };
  const Hierarchy h;

  // Frozen system: every difference is exactly zero.
  {
    KuramotoSpec s;
    s.sigma = 0.0;
    s.x0_mean = 0.0;
    s.x0_variance = 0.0;
    s.theta_low = s.theta_high = 0.0;
    const KuramotoModel model(s);
    const QoISpec q = kuramoto_synchronization_qoi();
    const SamplerContext ctx{model, q, 1.0, Scheme::milstein, 2.0};
    bool zero = true;
    for (int m = 0; m < 20; ++m) {
      const SampleKey k = make_sample_key(1, MethodTag::test, 0, 0, m);
      for (const auto& d : {sample_time_diff(ctx, 10, 16, 2, k), sample_particle_subset_diff(ctx, 20, 2, 8, k),
                            sample_particle_partition_diff(ctx, 20, 2, 8, k), sample_joint_diff(ctx, 20, 2, 16, 2, k),
                            sample_mixed_diff(ctx, {2, 2}, h, k)}) {
        for (double x : d.values) zero = zero && x == 0.0;
      }
    }
    expect(zero, "frozen");
  }
  // Interaction-free partition identity.
  {
    KuramotoSpec s;
    s.coupling = 0.0;
    const KuramotoModel model(s);
    const QoISpec q = kuramoto_synchronization_qoi();
    const SamplerContext ctx{model, q, 1.0, Scheme::milstein, 2.0};
    bool zero = true;
    for (int m = 0; m < 50; ++m) {
      for (double x : sample_particle_partition_diff(ctx, 40, 2, 16, make_sample_key(2, MethodTag::test, 0, 0, m)).values)
        zero = zero && x == 0.0;
    }
    expect(zero, "partition identity");
  }
  // Constant drift without noise: time coupling is exact.
  {
    KuramotoSpec s;
    s.sigma = 0.0;
    s.coupling = 0.0;
    s.theta_low = s.theta_high = 0.25;
    s.x0_variance = 0.0;
    const KuramotoModel model(s);
    QoISpec q;
    q.observables = {named_observable("identity")};
    const SamplerContext ctx{model, q, 1.0, Scheme::milstein, 2.0};
    bool zero = true;
    for (std::size_t N : {2u, 4u, 32u, 256u})
      zero = zero && sample_time_diff(ctx, 8, N, 2, make_sample_key(3, MethodTag::test, 0, 0, 0)).values[0] == 0.0;
    expect(zero, "time identity");
  }
  // Coarsening preserves sums of grid increments bit for bit.
  {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0.0, 0.25);
    bool same = true;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> fine(std::size_t{1} << (1 + trial % 10));
      for (double& x : fine) x = snap_to_increment_grid(z(rng));
      const double total = std::accumulate(fine.begin(), fine.end(), 0.0);
      std::vector<double> level = fine;
      while (level.size() > 1) level = coarsen_increments(level, 1, 2);
      same = same && level[0] == total;
    }
    expect(same, "coarsening");
  }
  // Drift is invariant under relabelling particles.
  {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + static_cast<std::size_t>(trial % 40);
      std::vector<double> x(n);
      for (double& a : x) a = u(rng);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<double> y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = x[perm[i]];
      for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(kuramoto_drift(0.0, i, y, 0.1) - kuramoto_drift(0.0, perm[i], x, 0.1)));
    }
    expect(worst <= 1e-12, "permutation");
  }
  // Reports do not depend on the worker count.
  {
    RunConfig one = base_config(), four = base_config();
    one.workers = 1;
    four.workers = 4;
    bool same = true;
    for (const char* method : {"mlmc-joint", "mimc"}) {
      same = same && strip_wall_clock(report_json(run_method(one, method, 0.1, 7))) ==
                         strip_wall_clock(report_json(run_method(four, method, 0.1, 7)));
    }
    expect(same, "worker determinism");
  }
  v.detail << checks << " exactness checks";
  return v;
}

// ------------------------------------------------------------------ 9

Verdict allocation() {
  Verdict v;
  const std::vector<double> v1{1.0}, w1{1.0}, v2{4.0, 1.0}, w2{1.0, 4.0};
  v.check(allocate_samples(v1, w1, 1.0 / 400).counts == std::vector<std::int64_t>{400}, "single level");
  v.check(allocate_samples(v2, w2, 0.01).counts == std::vector<std::int64_t>{800, 200}, "two levels");
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<double> var(n), work(n);
    for (std::size_t l = 0; l < n; ++l) {
      var[l] = std::pow(10.0, -6.0 + 7.0 * u(rng));
      work[l] = std::pow(10.0, 6.0 * u(rng));
    }
    const double target = std::pow(10.0, -6.0 + 5.0 * u(rng));
    const Allocation a = allocate_samples(var, work, target);
    double achieved = 0.0;
    for (std::size_t l = 0; l < n; ++l) achieved += var[l] / static_cast<double>(a.counts[l]);
    ok += achieved <= target ? 1 : 0;
  }
  v.detail << "examples [400], [800,200]; " << ok << "/1000 random instances meet the target";
  v.check(ok == 1000, "random instances");
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"predictor exactness", predictor},
      {"weak rates", weak_rates},
      {"variance rates", variance_rates},
      {"mixed-difference rates", mixed_rates},
      {"tolerance attainment", tolerance_attainment},
      {"work-complexity scaling", work_scaling},
      {"max sample work", max_sample_work},
      {"exactness and coupling", exactness},
      {"allocation", allocation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "error: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << v.detail.str()
              << " (" << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
