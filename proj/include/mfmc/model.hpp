#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfmc/errors.hpp"
#include "mfmc/rng.hpp"

namespace mfmc {

/// Read-only view of P particle states stored row-major as P x d doubles.
class StateView {
 public:
  StateView(std::span<const double> data, std::size_t dim) : data_(data), dim_(dim) {}

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> operator[](std::size_t q) const { return data_.subspan(q * dim_, dim_); }
  std::span<const double> flat() const noexcept { return data_; }

 private:
  std::span<const double> data_;
  std::size_t dim_;
};

/// Law of one scalar component: constant(a), uniform(a, b) or normal(mean a, variance b).
struct Distribution {
  enum class Family { none, constant, uniform, normal };

  Family family = Family::none;
  double a = 0.0;
  double b = 0.0;

  static Distribution none() { return {}; }
  static Distribution constant(double value) { return {Family::constant, value, 0.0}; }
  static Distribution uniform(double low, double high) {
    if (!(low <= high)) throw invalid_input("uniform law needs low <= high");
    return {Family::uniform, low, high};
  }
  static Distribution normal(double mean, double variance) {
    if (!(variance >= 0.0)) throw invalid_input("normal law needs a non-negative variance");
    return {Family::normal, mean, variance};
  }

  double draw(CounterStream& stream) const {
    switch (family) {
      case Family::constant:
        return a;
      case Family::uniform:
        return a == b ? a : a + (b - a) * stream.uniform();
      case Family::normal:
        return b == 0.0 ? a : a + std::sqrt(b) * stream.normal();
      case Family::none:
        break;
    }
    throw invalid_input("cannot draw from the 'none' law");
  }

  double mean() const {
    switch (family) {
      case Family::constant:
      case Family::normal:
        return a;
      case Family::uniform:
        return 0.5 * (a + b);
      case Family::none:
        break;
    }
    return 0.0;
  }

  double variance() const {
    switch (family) {
      case Family::uniform:
        return (b - a) * (b - a) / 12.0;
      case Family::normal:
        return b;
      default:
        return 0.0;
    }
  }
};

/// Interface every particle system must provide to the stepping and sampling
/// code. `drift` and `diffusion` receive the frozen state of the whole system
/// (the empirical measure) and write a d-vector resp. a row-major d x d matrix.
template <class M>
concept ParticleModel = requires(const M& m, double t, std::size_t p, StateView states,
                                 std::span<const double> theta, std::span<double> out) {
  { m.state_dim() } -> std::convertible_to<std::size_t>;
  { m.parameter_dim() } -> std::convertible_to<std::size_t>;
  { m.initial_law() } -> std::convertible_to<Distribution>;
  { m.parameter_law() } -> std::convertible_to<Distribution>;
  { m.has_constant_diffusion() } -> std::convertible_to<bool>;
  { m.diffusion_depends_on_measure() } -> std::convertible_to<bool>;
  { m.has_diffusion_derivative() } -> std::convertible_to<bool>;
  m.drift(t, p, states, theta, out);
  m.diffusion(t, p, states, theta, out);
  m.diffusion_state_derivative(t, p, states, theta, out);
};

/// Optional fast path: drift of all particles in one call. `thetas` holds
/// P x parameter_dim values, `out` P x d values.
template <class M>
concept BatchDriftModel = ParticleModel<M> && requires(const M& m, double t, StateView states,
                                                       std::span<const double> thetas,
                                                       std::span<double> out) {
  m.drift_all(t, states, thetas, out);
};

/// Type-erased particle system, convenient for ad-hoc and test models.
struct ModelSpec {
  using CoefficientFn = std::function<void(double t, std::size_t p, StateView states,
                                           std::span<const double> theta, std::span<double> out)>;

  CoefficientFn drift_fn;
  CoefficientFn diffusion_fn;
  CoefficientFn diffusion_derivative_fn;  ///< d b_kk / d x_k on the diagonal; optional
  Distribution initial;
  Distribution parameter;
  std::size_t dim = 1;
  std::size_t n_parameters = 0;
  bool constant_diffusion = false;
  bool measure_dependent_diffusion = false;

  std::size_t state_dim() const { return dim; }
  std::size_t parameter_dim() const { return n_parameters; }
  Distribution initial_law() const { return initial; }
  Distribution parameter_law() const { return parameter; }
  bool has_constant_diffusion() const { return constant_diffusion; }
  bool diffusion_depends_on_measure() const { return measure_dependent_diffusion; }
  bool has_diffusion_derivative() const { return static_cast<bool>(diffusion_derivative_fn); }

  void drift(double t, std::size_t p, StateView states, std::span<const double> theta,
             std::span<double> out) const {
    if (!drift_fn) throw invalid_input("model has no drift coefficient");
    drift_fn(t, p, states, theta, out);
  }
  void diffusion(double t, std::size_t p, StateView states, std::span<const double> theta,
                 std::span<double> out) const {
    if (!diffusion_fn) throw invalid_input("model has no diffusion coefficient");
    diffusion_fn(t, p, states, theta, out);
  }
  void diffusion_state_derivative(double t, std::size_t p, StateView states,
                                  std::span<const double> theta, std::span<double> out) const {
    if (!diffusion_derivative_fn) throw unsupported_scheme("model has no diffusion derivative");
    diffusion_derivative_fn(t, p, states, theta, out);
  }
};

/// Drift of particle p in the fully connected Kuramoto system:
/// theta + (1/P) sum_q sin(x_p - x_q), summed over q in ascending order
/// (the q = p term is zero). Each pair term is evaluated as
/// sin x_p cos x_q - cos x_p sin x_q, which is exactly antisymmetric in (p, q)
/// and exactly zero for equal states.
inline double kuramoto_drift(double /*t*/, std::size_t p, std::span<const double> states,
                             double theta) {
  if (states.empty()) throw invalid_input("kuramoto_drift: empty state list");
  if (p >= states.size()) throw invalid_input("kuramoto_drift: particle index out of range");
  const double sp = std::sin(states[p]);
  const double cp = std::cos(states[p]);
  double acc = 0.0;
  for (const double y : states) acc += sp * std::cos(y) - cp * std::sin(y);
  return theta + acc / static_cast<double>(states.size());
}

/// Parameters of the Kuramoto oscillator system. `coupling` scales the
/// interaction term; 1 is the standard model, 0 removes the interaction.
struct KuramotoSpec {
  double sigma = 0.4;
  double theta_low = -0.2;
  double theta_high = 0.2;
  double x0_mean = 0.0;
  double x0_variance = 0.2;
  double coupling = 1.0;
};

class KuramotoModel {
 public:
  KuramotoModel() = default;
  explicit KuramotoModel(KuramotoSpec spec) : spec_(spec) {
    if (!(spec.sigma >= 0.0)) throw invalid_input("kuramoto: sigma must be >= 0");
    if (!(spec.theta_low <= spec.theta_high)) throw invalid_input("kuramoto: theta_low > theta_high");
    if (!(spec.x0_variance >= 0.0)) throw invalid_input("kuramoto: x0_variance must be >= 0");
  }

  const KuramotoSpec& spec() const noexcept { return spec_; }

  std::size_t state_dim() const { return 1; }
  std::size_t parameter_dim() const { return 1; }
  Distribution initial_law() const {
    return spec_.x0_variance == 0.0 ? Distribution::constant(spec_.x0_mean)
                                    : Distribution::normal(spec_.x0_mean, spec_.x0_variance);
  }
  Distribution parameter_law() const {
    return spec_.theta_low == spec_.theta_high ? Distribution::constant(spec_.theta_low)
                                               : Distribution::uniform(spec_.theta_low, spec_.theta_high);
  }
  bool has_constant_diffusion() const { return true; }
  bool diffusion_depends_on_measure() const { return false; }
  bool has_diffusion_derivative() const { return true; }

  void drift(double t, std::size_t p, StateView states, std::span<const double> theta,
             std::span<double> out) const {
    const double interaction = kuramoto_drift(t, p, states.flat(), 0.0);
    out[0] = theta[0] + spec_.coupling * interaction;
  }

  /// All P drifts with sin and cos of each state computed once. The pair sums
  /// stay O(P^2) and accumulate in ascending q, so every entry is
  /// bit-identical to drift(). Four particles share one pass over q.
  void drift_all(double /*t*/, StateView states, std::span<const double> thetas,
                 std::span<double> out) const {
    const auto x = states.flat();
    const std::size_t n = x.size();
    thread_local std::vector<double> sin_, cos_;
    sin_.resize(n);
    cos_.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
      sin_[q] = std::sin(x[q]);
      cos_[q] = std::cos(x[q]);
    }
    const double inv = static_cast<double>(n);
    std::size_t p = 0;
    for (; p + 4 <= n; p += 4) {
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      for (std::size_t q = 0; q < n; ++q) {
        const double s = sin_[q], c = cos_[q];
        a0 += sin_[p] * c - cos_[p] * s;
        a1 += sin_[p + 1] * c - cos_[p + 1] * s;
        a2 += sin_[p + 2] * c - cos_[p + 2] * s;
        a3 += sin_[p + 3] * c - cos_[p + 3] * s;
      }
      out[p] = thetas[p] + spec_.coupling * (a0 / inv);
      out[p + 1] = thetas[p + 1] + spec_.coupling * (a1 / inv);
      out[p + 2] = thetas[p + 2] + spec_.coupling * (a2 / inv);
      out[p + 3] = thetas[p + 3] + spec_.coupling * (a3 / inv);
    }
    for (; p < n; ++p) {
      double a = 0.0;
      for (std::size_t q = 0; q < n; ++q) a += sin_[p] * cos_[q] - cos_[p] * sin_[q];
      out[p] = thetas[p] + spec_.coupling * (a / inv);
    }
  }

  void diffusion(double, std::size_t, StateView, std::span<const double>, std::span<double> out) const {
    out[0] = spec_.sigma;
  }
  void diffusion_state_derivative(double, std::size_t, StateView, std::span<const double>,
                                  std::span<double> out) const {
    out[0] = 0.0;
  }

 private:
  KuramotoSpec spec_;
};

/// All randomness behind one particle: initial state, parameter draw and the
/// Wiener increments at the finest resolution any consumer will need.
struct RandomInput {
  std::vector<double> x0;
  std::vector<double> theta;
  std::vector<double> increments;  ///< n_fine x d, row-major by step
  std::size_t n_fine = 0;
};

/// Wiener increments are rounded to this dyadic grid. Every partial sum of
/// up to 2^12 grid values of magnitude below 2^12 is then exact in double
/// precision, so coarsening by any grouping reproduces the same path.
inline constexpr double kIncrementGrid = 0x1p-40;

inline double snap_to_increment_grid(double v) { return std::nearbyint(v / kIncrementGrid) * kIncrementGrid; }

/// Draws the inputs of particles 0..P-1. Particle q depends only on
/// (key, q), never on P or on the order of evaluation.
template <ParticleModel Model>
std::vector<RandomInput> draw_inputs(const SampleKey& key, const Model& model, std::size_t P,
                                     std::size_t n_fine, double T) {
  if (P == 0) throw invalid_input("draw_inputs: P must be positive");
  if (n_fine == 0) throw invalid_input("draw_inputs: N_fine must be positive");
  if (!(T > 0.0)) throw invalid_input("draw_inputs: T must be positive");
  const std::size_t d = model.state_dim();
  const std::size_t k = model.parameter_dim();
  const Distribution init = model.initial_law();
  const Distribution param = model.parameter_law();
  const double scale = std::sqrt(T / static_cast<double>(n_fine));

  std::vector<RandomInput> inputs(P);
  for (std::size_t q = 0; q < P; ++q) {
    const auto particle = static_cast<std::uint32_t>(q);
    RandomInput& in = inputs[q];
    in.n_fine = n_fine;
    in.x0.resize(d);
    CounterStream x0_stream(key, particle, Purpose::x0);
    for (auto& v : in.x0) v = init.draw(x0_stream);
    in.theta.resize(k);
    if (k > 0) {
      CounterStream theta_stream(key, particle, Purpose::theta);
      for (auto& v : in.theta) v = param.draw(theta_stream);
    }
    in.increments.resize(n_fine * d);
    CounterStream wiener(key, particle, Purpose::wiener);
    for (auto& v : in.increments) v = snap_to_increment_grid(scale * wiener.normal());
  }
  return inputs;
}

/// Scalar observable psi applied to one particle state.
struct Observable {
  std::string name;
  std::function<double(std::span<const double>)> fn;
};

/// Observables estimated jointly plus an optional combiner of their estimates.
/// `combiner_sensitivity[i]` bounds |d combiner / d estimate_i| on the range of
/// the estimates; it fixes how the user tolerance is shared between components.
struct QoISpec {
  std::vector<Observable> observables;
  std::function<double(std::span<const double>)> combiner;
  std::vector<double> combiner_sensitivity;

  std::size_t size() const noexcept { return observables.size(); }

  /// Tolerance each component must meet so that the combined value meets `tol`
  /// to first order.
  double component_tolerance(double tol) const {
    if (!combiner) return tol;
    const double total = std::accumulate(combiner_sensitivity.begin(), combiner_sensitivity.end(), 0.0);
    return total > 0.0 ? tol / total : tol;
  }

  double combine(std::span<const double> estimates) const {
    return combiner ? combiner(estimates) : (estimates.empty() ? 0.0 : estimates[0]);
  }
};

/// E[cos X]^2 + E[sin X]^2: 1 for full synchrony, 0 for total disorder.
inline double total_synchronization(double est_cos, double est_sin) {
  return est_cos * est_cos + est_sin * est_sin;
}

/// Observable by name: cos, sin, identity, one (component 0 of the state).
inline Observable named_observable(const std::string& name) {
  if (name == "cos") return {name, [](std::span<const double> x) { return std::cos(x[0]); }};
  if (name == "sin") return {name, [](std::span<const double> x) { return std::sin(x[0]); }};
  if (name == "identity") return {name, [](std::span<const double> x) { return x[0]; }};
  if (name == "one") return {name, [](std::span<const double>) { return 1.0; }};
  throw invalid_input("unknown observable '" + name + "'");
}

/// cos and sin observables combined into the total synchronization.
/// |d/da (a^2 + b^2)| <= 2 on [-1, 1]^2, likewise for b.
inline QoISpec kuramoto_synchronization_qoi() {
  QoISpec qoi;
  qoi.observables = {named_observable("cos"), named_observable("sin")};
  qoi.combiner = [](std::span<const double> e) { return total_synchronization(e[0], e[1]); };
  qoi.combiner_sensitivity = {2.0, 2.0};
  return qoi;
}

}  // namespace mfmc
