#pragma once

// MC, MLMC and MIMC estimators of E[psi(X(T))] for the mean-field limit.
//
// All estimators share one engine: per level (or multi-index) key they keep
// every sample, indexed by sample number m. Sample m at key k is a pure
// function of (master_seed, method, k, m), samples are produced in parallel
// into their own slots, and moments are reduced in ascending m, so reports
// are bit-identical for any worker count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mfmc/analysis.hpp"
#include "mfmc/errors.hpp"
#include "mfmc/model.hpp"
#include "mfmc/parallel.hpp"
#include "mfmc/samplers.hpp"

namespace mfmc {

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Quantile of the standard normal: Acklam's rational approximation refined
/// by one Halley step against erfc.
inline double inverse_normal_cdf(double q) {
  if (!(q > 0.0 && q < 1.0)) throw invalid_input("inverse_normal_cdf: q must lie in (0, 1)");
  // 1 - q is exact for q > 0.5; refining in the lower tail keeps full precision.
  if (q > 0.5) return -inverse_normal_cdf(1.0 - q);
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (q < p_low) {
    const double r = std::sqrt(-2.0 * std::log(q));
    x = (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
        ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
  } else {
    const double u = q - 0.5;
    const double r = u * u;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  if (q == 0.5) return 0.0;
  const double e = normal_cdf(x) - q;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

/// Tolerance split into a bias part (1 - theta) TOL and a statistical part
/// theta TOL at confidence 1 - epsilon.
struct ErrorBudget {
  double tol = 0.1;
  double theta = 0.5;
  double epsilon = 0.05;

  void validate() const {
    if (!(tol > 0.0)) throw invalid_input("budget: tol must be positive");
    if (!(theta > 0.0 && theta < 1.0)) throw invalid_input("budget: theta must lie in (0, 1)");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw invalid_input("budget: epsilon must lie in (0, 1)");
  }
  double c_eps() const { return inverse_normal_cdf(1.0 - epsilon / 2.0); }
  double bias_target() const { return (1.0 - theta) * tol; }
  double variance_target() const {
    const double v = theta * tol / c_eps();
    return v * v;
  }
  ErrorBudget with_tol(double t) const { return {t, theta, epsilon}; }
};

struct Allocation {
  std::vector<std::int64_t> counts;
  bool degenerate = false;  ///< every variance was zero; counts are all 1
};

/// Work-optimal sample counts M_l = ceil(sqrt(V_l / W_l) sum_k sqrt(V_k W_k) / target),
/// floored at 1. Values within 1e-9 (relative) of an integer snap to it, so
/// exact arithmetic examples are not pushed up by rounding noise.
inline Allocation allocate_samples(std::span<const double> variances, std::span<const double> works,
                                   double variance_target) {
  if (variances.size() != works.size() || variances.empty()) {
    throw invalid_input("allocate_samples: need equal, non-empty variance and work lists");
  }
  if (!(variance_target > 0.0)) throw invalid_input("allocate_samples: target must be positive");
  double total = 0.0;
  bool any_positive = false;
  for (std::size_t l = 0; l < variances.size(); ++l) {
    if (!(variances[l] >= 0.0)) throw invalid_input("allocate_samples: negative variance");
    if (!(works[l] > 0.0)) throw invalid_input("allocate_samples: work must be positive");
    any_positive = any_positive || variances[l] > 0.0;
    total += std::sqrt(variances[l] * works[l]);
  }
  Allocation out;
  out.counts.assign(variances.size(), 1);
  if (!any_positive) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t l = 0; l < variances.size(); ++l) {
    const double m = std::sqrt(variances[l] / works[l]) * total / variance_target;
    const double nearest = std::round(m);
    const double snapped = std::abs(m - nearest) <= 1e-9 * std::max(1.0, m) ? nearest : std::ceil(m);
    if (snapped > static_cast<double>(std::numeric_limits<std::int64_t>::max() / 2)) {
      throw invalid_input("allocate_samples: sample count overflow");
    }
    out.counts[l] = std::max<std::int64_t>(1, static_cast<std::int64_t>(snapped));
  }
  return out;
}

/// Statistics of one level (key[1] == -1) or multi-index.
struct LevelStats {
  std::array<int, 2> key{0, -1};
  std::size_t particles = 0;  ///< finest particle count at this key
  std::size_t steps = 0;      ///< finest step count at this key
  std::int64_t m_taken = 0;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> fine_mean;
  double work_per_sample = 0.0;
  double total_work = 0.0;
  double wall_seconds = 0.0;
  double max_sample_wall = 0.0;
};

struct EstimateReport {
  std::string method;
  std::vector<std::string> observables;
  std::vector<double> estimate;             ///< per observable
  std::optional<double> combined;           ///< combiner applied to `estimate`
  std::vector<double> estimator_variance;   ///< sum over keys of V / M
  std::vector<double> bias_estimate;        ///< per observable, from the last level / boundary
  double total_work_units = 0.0;
  double total_wall_seconds = 0.0;
  double max_sample_work = 0.0;
  double calibration_work_units = 0.0;      ///< pilot ladder spent choosing MC/MLMC fixed parameters
  std::vector<LevelStats> levels;
  ErrorBudget budget;
  double component_tol = 0.0;
  int final_level = 0;
  std::vector<std::array<int, 2>> index_set;
  int max_particle_level = 0;
  int max_time_level = 0;
  std::size_t fixed_particles = 0;
  std::size_t fixed_steps = 0;
  std::uint64_t master_seed = 0;
  bool allocation_degenerate = false;
};

enum class MlmcVariant { time, particle, joint };

inline std::string to_string(MlmcVariant v) {
  switch (v) {
    case MlmcVariant::time: return "mlmc-n";
    case MlmcVariant::particle: return "mlmc-p";
    case MlmcVariant::joint: return "mlmc-joint";
  }
  return "?";
}

/// Everything that shapes a run apart from the model, observables and budget.
struct EstimatorSettings {
  double T = 1.0;
  Scheme scheme = Scheme::milstein;
  double gamma_p = 2.0;
  double s_p = 1.0;  ///< rates defining the MIMC index set
  double s_t = 2.0;
  std::uint64_t master_seed = 0;
  int pilot = 25;
  int level_init = 2;
  int level_cap = 12;
  std::optional<int> fixed_level;  ///< skip bias control and use exactly this L
  std::size_t workers = 1;
  std::size_t fixed_particles = 0;  ///< P for the time hierarchy (0: calibrate)
  std::size_t fixed_steps = 0;      ///< N for the particle hierarchy (0: calibrate)
  bool subset_particle_sampler = false;
  int max_allocation_rounds = 50;
};

namespace detail {

/// All samples taken at one key.
class KeyRecord {
 public:
  KeyRecord(std::array<int, 2> key, std::size_t n_obs, std::size_t particles, std::size_t steps)
      : key_(key), n_obs_(n_obs), particles_(particles), steps_(steps) {}

  std::array<int, 2> key() const { return key_; }
  std::int64_t count() const { return static_cast<std::int64_t>(values_.size() / std::max<std::size_t>(n_obs_, 1)); }
  double work_per_sample() const { return work_per_sample_; }
  double total_work() const { return work_per_sample_ * static_cast<double>(count()); }
  double wall_seconds() const { return wall_; }

  template <class SampleFn>
  void extend_to(std::int64_t target, std::size_t workers, SampleFn&& sample) {
    const std::int64_t start = count();
    if (target <= start) return;
    std::vector<DiffSample> batch(static_cast<std::size_t>(target - start));
    parallel_for(batch.size(), workers, [&](std::size_t i) { batch[i] = sample(start + static_cast<std::int64_t>(i)); });
    for (const DiffSample& s : batch) {
      if (s.values.size() != n_obs_) throw invalid_input("sampler returned the wrong number of values");
      if (work_per_sample_ < 0.0) {
        work_per_sample_ = s.work_units;
      } else if (s.work_units != work_per_sample_) {
        throw invalid_input("sampler work changed between samples of one key");
      }
      values_.insert(values_.end(), s.values.begin(), s.values.end());
      fine_.insert(fine_.end(), s.fine_values.begin(), s.fine_values.end());
      wall_ += s.wall_seconds;
      max_wall_ = std::max(max_wall_, s.wall_seconds);
    }
  }

  double mean(std::size_t i) const {
    const std::int64_t m = count();
    if (m == 0) return 0.0;
    double acc = 0.0;
    for (std::int64_t k = 0; k < m; ++k) acc += values_[static_cast<std::size_t>(k) * n_obs_ + i];
    return acc / static_cast<double>(m);
  }

  double variance(std::size_t i) const {
    const std::int64_t m = count();
    if (m < 2) return 0.0;
    const double mu = mean(i);
    double acc = 0.0;
    for (std::int64_t k = 0; k < m; ++k) {
      const double r = values_[static_cast<std::size_t>(k) * n_obs_ + i] - mu;
      acc += r * r;
    }
    return acc / static_cast<double>(m - 1);
  }

  double fine_mean(std::size_t i) const {
    const std::int64_t m = count();
    if (m == 0 || fine_.size() != values_.size()) return 0.0;
    double acc = 0.0;
    for (std::int64_t k = 0; k < m; ++k) acc += fine_[static_cast<std::size_t>(k) * n_obs_ + i];
    return acc / static_cast<double>(m);
  }

  LevelStats stats() const {
    LevelStats s;
    s.key = key_;
    s.particles = particles_;
    s.steps = steps_;
    s.m_taken = count();
    for (std::size_t i = 0; i < n_obs_; ++i) {
      s.mean.push_back(mean(i));
      s.variance.push_back(variance(i));
      s.fine_mean.push_back(fine_mean(i));
    }
    s.work_per_sample = work_per_sample_;
    s.total_work = total_work();
    s.wall_seconds = wall_;
    s.max_sample_wall = max_wall_;
    return s;
  }

 private:
  std::array<int, 2> key_;
  std::size_t n_obs_;
  std::size_t particles_;
  std::size_t steps_;
  std::vector<double> values_;
  std::vector<double> fine_;
  double work_per_sample_ = -1.0;
  double wall_ = 0.0;
  double max_wall_ = 0.0;
};

using KeySampler = std::function<DiffSample(std::int64_t m)>;

/// Keys of one run in insertion order, with their samplers.
class Engine {
 public:
  Engine(std::size_t n_obs, std::size_t workers) : n_obs_(n_obs), workers_(workers) {}

  KeyRecord& ensure(std::array<int, 2> key, std::size_t particles, std::size_t steps, KeySampler sampler,
                    std::int64_t pilot) {
    auto it = index_.find(key);
    if (it == index_.end()) {
      it = index_.emplace(key, records_.size()).first;
      records_.emplace_back(key, n_obs_, particles, steps);
      samplers_.push_back(std::move(sampler));
    }
    KeyRecord& rec = records_[it->second];
    rec.extend_to(pilot, workers_, samplers_[it->second]);
    return rec;
  }

  KeyRecord& at(std::array<int, 2> key) { return records_[index_.at(key)]; }

  /// Raises sample counts of `keys` until every observable meets its variance
  /// target under the work-optimal allocation, re-estimating variances after
  /// each round. Returns true when every observable had zero variance.
  bool allocate(const std::vector<std::array<int, 2>>& keys, const std::vector<double>& variance_targets,
                int max_rounds) {
    bool degenerate = true;
    for (int round = 0; round < max_rounds; ++round) {
      std::vector<std::int64_t> want(keys.size(), 0);
      std::vector<double> works(keys.size());
      for (std::size_t k = 0; k < keys.size(); ++k) works[k] = at(keys[k]).work_per_sample();
      degenerate = true;
      for (std::size_t i = 0; i < n_obs_; ++i) {
        std::vector<double> vars(keys.size());
        for (std::size_t k = 0; k < keys.size(); ++k) vars[k] = at(keys[k]).variance(i);
        const Allocation a = allocate_samples(vars, works, variance_targets[i]);
        degenerate = degenerate && a.degenerate;
        for (std::size_t k = 0; k < keys.size(); ++k) want[k] = std::max(want[k], a.counts[k]);
      }
      bool grew = false;
      for (std::size_t k = 0; k < keys.size(); ++k) {
        const auto idx = index_.at(keys[k]);
        if (want[k] > records_[idx].count()) {
          records_[idx].extend_to(want[k], workers_, samplers_[idx]);
          grew = true;
        }
      }
      if (!grew) break;
    }
    return degenerate;
  }

  void fill_report(const std::vector<std::array<int, 2>>& keys, const QoISpec& qoi, EstimateReport& r) const {
    r.observables.clear();
    for (const auto& o : qoi.observables) r.observables.push_back(o.name);
    r.estimate.assign(n_obs_, 0.0);
    r.estimator_variance.assign(n_obs_, 0.0);
    r.levels.clear();
    for (const auto& key : keys) {
      const KeyRecord& rec = records_[index_.at(key)];
      LevelStats s = rec.stats();
      for (std::size_t i = 0; i < n_obs_; ++i) {
        r.estimate[i] += s.mean[i];
        if (s.m_taken > 0) r.estimator_variance[i] += s.variance[i] / static_cast<double>(s.m_taken);
      }
      r.total_work_units += s.total_work;
      r.total_wall_seconds += s.wall_seconds;
      if (s.m_taken > 0) r.max_sample_work = std::max(r.max_sample_work, s.work_per_sample);
      r.levels.push_back(std::move(s));
    }
    if (qoi.combiner) r.combined = qoi.combine(r.estimate);
  }

  std::size_t n_obs() const { return n_obs_; }

 private:
  std::size_t n_obs_;
  std::size_t workers_;
  std::vector<KeyRecord> records_;
  std::vector<KeySampler> samplers_;
  std::map<std::array<int, 2>, std::size_t> index_;
};

inline void validate_settings(const EstimatorSettings& s, const QoISpec& qoi) {
  if (qoi.size() == 0) throw invalid_input("estimator: no observables");
  if (s.pilot < 2) throw invalid_input("estimator: pilot size must be >= 2");
  if (s.level_init < 0 || s.level_cap < s.level_init) throw invalid_input("estimator: bad level_init / level_cap");
  if (s.fixed_level && *s.fixed_level < 0) throw invalid_input("estimator: negative fixed level");
  if (!(s.T > 0.0)) throw invalid_input("estimator: T must be positive");
}

inline std::string bias_diagnostics(int level, const std::vector<double>& bias, double target) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"level\":" << level << ",\"bias_target\":" << target << ",\"bias\":[";
  for (std::size_t i = 0; i < bias.size(); ++i) os << (i ? "," : "") << bias[i];
  os << "]}";
  return os.str();
}

inline bool within(const std::vector<double>& bias, double target) {
  return std::all_of(bias.begin(), bias.end(), [&](double b) { return b <= target; });
}

}  // namespace detail

/// Plain Monte Carlo with fixed (P, N): pilot samples, then the sample count
/// that meets the variance target.
template <ParticleModel Model>
EstimateReport run_mc(const Model& model, const QoISpec& qoi, const ErrorBudget& budget, std::size_t P, std::size_t N,
                      const EstimatorSettings& settings) {
  budget.validate();
  detail::validate_settings(settings, qoi);
  if (P < 1 || N < 1) throw invalid_input("run_mc: P and N must be >= 1");
  const SamplerContext<Model> ctx{model, qoi, settings.T, settings.scheme, settings.gamma_p};
  const double tol_c = qoi.component_tolerance(budget.tol);
  const std::vector<double> targets(qoi.size(), budget.with_tol(tol_c).variance_target());

  detail::Engine engine(qoi.size(), settings.workers);
  const std::array<int, 2> key{0, -1};
  engine.ensure(key, P, N,
                [&, P, N](std::int64_t m) {
                  return sample_plain(ctx, P, N, make_sample_key(settings.master_seed, MethodTag::mc, 0, 0, m));
                },
                settings.pilot);
  EstimateReport r;
  r.allocation_degenerate = engine.allocate({key}, targets, settings.max_allocation_rounds);
  r.method = "mc";
  r.budget = budget;
  r.component_tol = tol_c;
  r.master_seed = settings.master_seed;
  r.fixed_particles = P;
  r.fixed_steps = N;
  engine.fill_report({key}, qoi, r);
  return r;
}

/// (P_L, N_L) picked by a pilot ladder, with the level and the work spent.
struct Discretization {
  std::size_t particles = 0;
  std::size_t steps = 0;
  int level = 0;
  double work_units = 0.0;
};

/// Pilot ladder of joint differences that picks the first level whose
/// difference meets the bias target for every observable.
template <ParticleModel Model>
Discretization calibrate_discretization(const Model& model, const QoISpec& qoi, const ErrorBudget& budget,
                                        const Hierarchy& h, const EstimatorSettings& settings) {
  budget.validate();
  h.validate();
  detail::validate_settings(settings, qoi);
  const SamplerContext<Model> ctx{model, qoi, settings.T, settings.scheme, settings.gamma_p};
  const double target = budget.with_tol(qoi.component_tolerance(budget.tol)).bias_target();
  detail::Engine engine(qoi.size(), settings.workers);
  double work = 0.0;
  for (int L = std::max(1, settings.level_init);; ++L) {
    if (L > settings.level_cap) {
      throw budget_infeasible("calibration ladder exceeded the level cap",
                              "{\"level_cap\":" + std::to_string(settings.level_cap) + "}");
    }
    const int level = L;
    auto& rec = engine.ensure({level, -1}, h.particles(level), h.steps(level),
                              [&, level](std::int64_t m) {
                                return sample_joint_diff(ctx, h.particles(level), h.beta_p, h.steps(level), h.beta_t,
                                                         make_sample_key(settings.master_seed, MethodTag::ladder,
                                                                         level, 0, m));
                              },
                              settings.pilot);
    work += rec.total_work();
    std::vector<double> bias(qoi.size());
    for (std::size_t i = 0; i < qoi.size(); ++i) bias[i] = std::abs(rec.mean(i));
    if (detail::within(bias, target)) return {h.particles(level), h.steps(level), level, work};
  }
}

/// Multilevel Monte Carlo over a time, particle or joint hierarchy. Starting
/// at level_init, levels are added while |mean of the last level difference|
/// exceeds (1 - theta) TOL for some observable; then sample counts are
/// allocated against the variance target.
template <ParticleModel Model>
EstimateReport run_mlmc(const Model& model, const QoISpec& qoi, const ErrorBudget& budget, MlmcVariant variant,
                        const Hierarchy& h, const EstimatorSettings& settings) {
  budget.validate();
  h.validate();
  detail::validate_settings(settings, qoi);
  const SamplerContext<Model> ctx{model, qoi, settings.T, settings.scheme, settings.gamma_p};
  const double tol_c = qoi.component_tolerance(budget.tol);
  const ErrorBudget component = budget.with_tol(tol_c);

  EstimateReport r;
  r.method = to_string(variant);
  r.budget = budget;
  r.component_tol = tol_c;
  r.master_seed = settings.master_seed;

  std::size_t P_fixed = settings.fixed_particles;
  std::size_t N_fixed = settings.fixed_steps;
  if ((variant == MlmcVariant::time && P_fixed == 0) || (variant == MlmcVariant::particle && N_fixed == 0)) {
    const Discretization d = calibrate_discretization(model, qoi, budget, h, settings);
    if (P_fixed == 0) P_fixed = d.particles;
    if (N_fixed == 0) N_fixed = d.steps;
    r.calibration_work_units = d.work_units;
  }
  if (variant == MlmcVariant::time) r.fixed_particles = P_fixed;
  if (variant == MlmcVariant::particle) r.fixed_steps = N_fixed;

  const MethodTag tag = variant == MlmcVariant::time       ? MethodTag::mlmc_time
                        : variant == MlmcVariant::particle ? MethodTag::mlmc_particle
                                                           : MethodTag::mlmc_joint;
  auto sizes = [&](int l) -> std::array<std::size_t, 2> {
    switch (variant) {
      case MlmcVariant::time: return {P_fixed, h.steps(l)};
      case MlmcVariant::particle: return {h.particles(l), N_fixed};
      case MlmcVariant::joint: break;
    }
    return {h.particles(l), h.steps(l)};
  };
  auto sampler_for = [&](int l) -> detail::KeySampler {
    const auto [P, N] = sizes(l);
    return [&, l, P, N](std::int64_t m) {
      const SampleKey key = make_sample_key(settings.master_seed, tag, l, 0, m);
      if (l == 0) return sample_plain(ctx, P, N, key);
      switch (variant) {
        case MlmcVariant::time: return sample_time_diff(ctx, P, N, h.beta_t, key);
        case MlmcVariant::particle:
          return settings.subset_particle_sampler ? sample_particle_subset_diff(ctx, P, h.beta_p, N, key)
                                                  : sample_particle_partition_diff(ctx, P, h.beta_p, N, key);
        case MlmcVariant::joint: break;
      }
      return sample_joint_diff(ctx, P, h.beta_p, N, h.beta_t, key);
    };
  };

  detail::Engine engine(qoi.size(), settings.workers);
  auto add_level = [&](int l) {
    const auto [P, N] = sizes(l);
    return std::ref(engine.ensure({l, -1}, P, N, sampler_for(l), settings.pilot));
  };

  int L = settings.fixed_level.value_or(settings.level_init);
  for (int l = 0; l <= L; ++l) add_level(l);
  std::vector<double> bias(qoi.size());
  auto measure_bias = [&] {
    const auto& last = engine.at({L, -1});
    for (std::size_t i = 0; i < qoi.size(); ++i) bias[i] = std::abs(last.mean(i));
  };
  measure_bias();
  if (!settings.fixed_level) {
    while (!detail::within(bias, component.bias_target())) {
      if (L + 1 > settings.level_cap) {
        throw budget_infeasible("MLMC level cap " + std::to_string(settings.level_cap) + " reached",
                                detail::bias_diagnostics(L, bias, component.bias_target()));
      }
      add_level(++L);
      measure_bias();
    }
  }

  std::vector<std::array<int, 2>> keys;
  for (int l = 0; l <= L; ++l) keys.push_back({l, -1});
  const std::vector<double> targets(qoi.size(), component.variance_target());
  r.allocation_degenerate = engine.allocate(keys, targets, settings.max_allocation_rounds);
  engine.fill_report(keys, qoi, r);
  r.bias_estimate = bias;
  r.final_level = L;
  r.max_particle_level = variant == MlmcVariant::time ? -1 : L;
  r.max_time_level = variant == MlmcVariant::particle ? -1 : L;
  return r;
}

/// Multi-index Monte Carlo over (particle index, time index). The index set
/// I(L) = {w1 a1 + w2 a2 <= L} grows from level_init while the sum of
/// |mean mixed difference| over its outer boundary exceeds (1 - theta) TOL
/// for some observable. The outer boundary holds the members with a forward
/// neighbour outside the set; every boundary index is part of the estimator.
template <ParticleModel Model>
EstimateReport run_mimc(const Model& model, const QoISpec& qoi, const ErrorBudget& budget, const Hierarchy& h,
                        const EstimatorSettings& settings) {
  budget.validate();
  h.validate();
  detail::validate_settings(settings, qoi);
  if (h.beta_p != h.beta_t) throw invalid_input("run_mimc: requires beta_p == beta_t");
  const SamplerContext<Model> ctx{model, qoi, settings.T, settings.scheme, settings.gamma_p};
  const double tol_c = qoi.component_tolerance(budget.tol);
  const ErrorBudget component = budget.with_tol(tol_c);

  detail::Engine engine(qoi.size(), settings.workers);
  auto index_set = [&](int L) { return build_index_set(L, settings.s_p, settings.s_t, settings.gamma_p); };

  int L = settings.fixed_level.value_or(settings.level_init);
  std::vector<double> bias(qoi.size(), 0.0);
  auto boundary_bias = [&](const MultiIndexSet& set) {
    std::fill(bias.begin(), bias.end(), 0.0);
    for (const auto& a : set.members) {
      engine.ensure(a, h.particles(a[0]), h.steps(a[1]),
                    [&, a](std::int64_t m) {
                      return sample_mixed_diff(ctx, a, h,
                                               make_sample_key(settings.master_seed, MethodTag::mimc, a[0], a[1], m));
                    },
                    settings.pilot);
      if (set.contains({a[0] + 1, a[1]}) && set.contains({a[0], a[1] + 1})) continue;
      for (std::size_t i = 0; i < qoi.size(); ++i) bias[i] += std::abs(engine.at(a).mean(i));
    }
  };
  MultiIndexSet set = index_set(L);
  if (set.members.empty()) throw invalid_input("run_mimc: empty index set");
  boundary_bias(set);
  if (!settings.fixed_level) {
    while (!detail::within(bias, component.bias_target())) {
      const std::size_t size = set.members.size();
      while (set.members.size() == size) {
        if (L + 1 > settings.level_cap) {
          throw budget_infeasible("MIMC level cap " + std::to_string(settings.level_cap) + " reached",
                                  detail::bias_diagnostics(L, bias, component.bias_target()));
        }
        set = index_set(++L);
      }
      boundary_bias(set);
    }
  }

  const MultiIndexSet& final_set = set;
  const std::vector<double> targets(qoi.size(), component.variance_target());
  EstimateReport r;
  r.allocation_degenerate = engine.allocate(final_set.members, targets, settings.max_allocation_rounds);
  engine.fill_report(final_set.members, qoi, r);
  r.method = "mimc";
  r.budget = budget;
  r.component_tol = tol_c;
  r.master_seed = settings.master_seed;
  r.bias_estimate = bias;
  r.final_level = L;
  r.index_set = final_set.members;
  for (const auto& a : final_set.members) {
    r.max_particle_level = std::max(r.max_particle_level, a[0]);
    r.max_time_level = std::max(r.max_time_level, a[1]);
  }
  return r;
}

}  // namespace mfmc
