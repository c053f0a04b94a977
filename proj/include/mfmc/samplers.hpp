#pragma once

// Single-sample building blocks of the MC, MLMC and MIMC estimators.
//
// Every sampler draws one set of particle inputs at the finest step count it
// needs and evaluates all of its constituent systems on those inputs. A
// difference is accumulated particle by particle: particle q contributes the
// signed sum of psi over the systems it belongs to, and the total is divided
// by the fine particle count. For the partitioning sampler every fine
// particle sits in exactly one coarse block, so this equals
// phi_fine - (1/beta) sum_i phi_block_i and regrouping an interaction-free
// system cancels exactly.

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mfmc/errors.hpp"
#include "mfmc/model.hpp"
#include "mfmc/rng.hpp"
#include "mfmc/stepping.hpp"

namespace mfmc {

/// Geometric hierarchies P_l = P0 beta_p^l and N_l = N0 beta_t^l.
struct Hierarchy {
  std::size_t P0 = 5;
  std::size_t N0 = 4;
  std::size_t beta_p = 2;
  std::size_t beta_t = 2;

  std::size_t particles(int level) const { return P0 * ipow(beta_p, level); }
  std::size_t steps(int level) const { return N0 * ipow(beta_t, level); }

  void validate() const {
    if (P0 < 1 || N0 < 1) throw invalid_input("hierarchy: P0 and N0 must be >= 1");
    if (beta_p < 2 || beta_t < 2) throw invalid_input("hierarchy: beta_p and beta_t must be >= 2");
  }

 private:
  static std::size_t ipow(std::size_t base, int e) {
    if (e < 0) throw invalid_input("hierarchy: negative level");
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
  }
};

enum class SamplerKind { plain, time_diff, particle_subset_diff, particle_partition_diff, joint_diff, mixed_diff };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::plain: return "plain";
    case SamplerKind::time_diff: return "time";
    case SamplerKind::particle_subset_diff: return "particle-subset";
    case SamplerKind::particle_partition_diff: return "particle-partition";
    case SamplerKind::joint_diff: return "joint";
    case SamplerKind::mixed_diff: return "mixed";
  }
  return "?";
}

/// One evaluation of a level or index difference.
struct DiffSample {
  std::vector<double> values;       ///< one per observable
  std::vector<double> fine_values;  ///< phi of the finest constituent system
  double work_units = 0.0;          ///< sum of N P^gamma_p over constituent systems
  double wall_seconds = 0.0;
};

/// Cost model N P^gamma of one system. Integral exponents are evaluated in
/// exact integer arithmetic.
inline double system_work(std::size_t N, std::size_t P, double gamma_p) {
  const double rounded = std::round(gamma_p);
  if (rounded == gamma_p && gamma_p >= 0.0 && gamma_p <= 8.0) {
    unsigned long long w = N;
    for (int i = 0; i < static_cast<int>(rounded); ++i) w *= P;
    return static_cast<double>(w);
  }
  return static_cast<double>(N) * std::pow(static_cast<double>(P), gamma_p);
}

/// Mean of each observable over the particles, accumulated in ascending index.
inline std::vector<double> phi(const QoISpec& qoi, StateView states) {
  if (states.size() == 0) throw invalid_input("phi: empty state list");
  std::vector<double> out(qoi.size(), 0.0);
  for (std::size_t i = 0; i < qoi.size(); ++i) {
    double acc = 0.0;
    for (std::size_t q = 0; q < states.size(); ++q) acc += qoi.observables[i].fn(states[q]);
    out[i] = acc / static_cast<double>(states.size());
  }
  return out;
}

/// What every sampler needs besides its discretization parameters.
template <ParticleModel Model>
struct SamplerContext {
  const Model& model;
  const QoISpec& qoi;
  double T = 1.0;
  Scheme scheme = Scheme::milstein;
  double gamma_p = 2.0;
};

template <ParticleModel Model>
SamplerContext(const Model&, const QoISpec&, double, Scheme, double) -> SamplerContext<Model>;

namespace detail {

/// psi_i(x_q(T)) for every particle q of one simulated system, q-major.
template <ParticleModel Model>
std::vector<double> particle_observables(const SamplerContext<Model>& ctx, std::span<const RandomInput> inputs,
                                         std::size_t N) {
  const PathResult path = simulate_system(ctx.model, inputs, N, ctx.T, ctx.scheme);
  const StateView states = path.view();
  const std::size_t n_obs = ctx.qoi.size();
  std::vector<double> out(states.size() * n_obs);
  for (std::size_t q = 0; q < states.size(); ++q) {
    for (std::size_t i = 0; i < n_obs; ++i) out[q * n_obs + i] = ctx.qoi.observables[i].fn(states[q]);
  }
  return out;
}

/// psi values of the partitioned system: block i (particles i*Pc .. (i+1)*Pc-1)
/// is simulated on its own and the results are concatenated in particle order.
template <ParticleModel Model>
std::vector<double> partitioned_observables(const SamplerContext<Model>& ctx, std::span<const RandomInput> inputs,
                                            std::size_t beta, std::size_t N) {
  const std::size_t block = inputs.size() / beta;
  std::vector<double> out;
  out.reserve(inputs.size() * ctx.qoi.size());
  for (std::size_t i = 0; i < beta; ++i) {
    const auto part = particle_observables(ctx, inputs.subspan(i * block, block), N);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

/// (1/P) sum_q value(q, i) for every observable i, ascending q.
template <class PerParticle>
std::vector<double> particle_mean(std::size_t P, std::size_t n_obs, PerParticle&& value) {
  std::vector<double> out(n_obs, 0.0);
  for (std::size_t i = 0; i < n_obs; ++i) {
    double acc = 0.0;
    for (std::size_t q = 0; q < P; ++q) acc += value(q, i);
    out[i] = acc / static_cast<double>(P);
  }
  return out;
}

inline void require_split(std::size_t fine, std::size_t beta, const char* what) {
  if (beta < 2) throw coupling_error(std::string(what) + ": beta must be >= 2");
  if (fine == 0 || fine % beta != 0) {
    throw coupling_error(std::string(what) + ": " + std::to_string(fine) + " not divisible by " +
                         std::to_string(beta));
  }
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// One sample of phi_P^N.
template <ParticleModel Model>
DiffSample sample_plain(const SamplerContext<Model>& ctx, std::size_t P, std::size_t N, const SampleKey& key) {
  if (P < 1 || N < 1) throw invalid_input("sample_plain: P and N must be >= 1");
  detail::Stopwatch clock;
  const auto inputs = draw_inputs(key, ctx.model, P, N, ctx.T);
  const PathResult path = simulate_system(ctx.model, std::span<const RandomInput>(inputs), N, ctx.T, ctx.scheme);
  DiffSample s;
  s.values = phi(ctx.qoi, path.view());
  s.fine_values = s.values;
  s.work_units = system_work(N, P, ctx.gamma_p);
  s.wall_seconds = clock.seconds();
  return s;
}

/// phi_P^{N_fine} - phi_P^{N_fine / beta_t} on one Brownian path.
template <ParticleModel Model>
DiffSample sample_time_diff(const SamplerContext<Model>& ctx, std::size_t P, std::size_t N_fine, std::size_t beta_t,
                            const SampleKey& key) {
  if (P < 1) throw invalid_input("sample_time_diff: P must be >= 1");
  detail::require_split(N_fine, beta_t, "sample_time_diff");
  detail::Stopwatch clock;
  const auto inputs = draw_inputs(key, ctx.model, P, N_fine, ctx.T);
  const std::span<const RandomInput> all(inputs);
  const std::size_t n_obs = ctx.qoi.size();
  const auto fine = detail::particle_observables(ctx, all, N_fine);
  const auto coarse = detail::particle_observables(ctx, all, N_fine / beta_t);
  DiffSample s;
  s.values = detail::particle_mean(P, n_obs, [&](std::size_t q, std::size_t i) {
    return fine[q * n_obs + i] - coarse[q * n_obs + i];
  });
  s.fine_values = detail::particle_mean(P, n_obs, [&](std::size_t q, std::size_t i) { return fine[q * n_obs + i]; });
  s.work_units = system_work(N_fine, P, ctx.gamma_p) + system_work(N_fine / beta_t, P, ctx.gamma_p);
  s.wall_seconds = clock.seconds();
  return s;
}

/// phi_{P_fine}^N minus phi of a separate system built from the first
/// P_fine / beta_p particle inputs only.
template <ParticleModel Model>
DiffSample sample_particle_subset_diff(const SamplerContext<Model>& ctx, std::size_t P_fine, std::size_t beta_p,
                                       std::size_t N, const SampleKey& key) {
  if (N < 1) throw invalid_input("sample_particle_subset_diff: N must be >= 1");
  detail::require_split(P_fine, beta_p, "sample_particle_subset_diff");
  detail::Stopwatch clock;
  const std::size_t P_coarse = P_fine / beta_p;
  const auto inputs = draw_inputs(key, ctx.model, P_fine, N, ctx.T);
  const std::span<const RandomInput> all(inputs);
  const PathResult fine = simulate_system(ctx.model, all, N, ctx.T, ctx.scheme);
  const PathResult coarse = simulate_system(ctx.model, all.first(P_coarse), N, ctx.T, ctx.scheme);
  const auto phi_fine = phi(ctx.qoi, fine.view());
  const auto phi_coarse = phi(ctx.qoi, coarse.view());
  DiffSample s;
  s.values.resize(phi_fine.size());
  for (std::size_t i = 0; i < phi_fine.size(); ++i) s.values[i] = phi_fine[i] - phi_coarse[i];
  s.fine_values = phi_fine;
  s.work_units = system_work(N, P_fine, ctx.gamma_p) + system_work(N, P_coarse, ctx.gamma_p);
  s.wall_seconds = clock.seconds();
  return s;
}

/// phi_{P_fine}^N minus the average of beta_p independent systems of
/// P_fine / beta_p particles built from disjoint contiguous input blocks.
template <ParticleModel Model>
DiffSample sample_particle_partition_diff(const SamplerContext<Model>& ctx, std::size_t P_fine, std::size_t beta_p,
                                          std::size_t N, const SampleKey& key) {
  if (N < 1) throw invalid_input("sample_particle_partition_diff: N must be >= 1");
  detail::require_split(P_fine, beta_p, "sample_particle_partition_diff");
  detail::Stopwatch clock;
  const auto inputs = draw_inputs(key, ctx.model, P_fine, N, ctx.T);
  const std::span<const RandomInput> all(inputs);
  const std::size_t n_obs = ctx.qoi.size();
  const auto fine = detail::particle_observables(ctx, all, N);
  const auto coarse = detail::partitioned_observables(ctx, all, beta_p, N);
  DiffSample s;
  s.values = detail::particle_mean(P_fine, n_obs, [&](std::size_t q, std::size_t i) {
    return fine[q * n_obs + i] - coarse[q * n_obs + i];
  });
  s.fine_values =
      detail::particle_mean(P_fine, n_obs, [&](std::size_t q, std::size_t i) { return fine[q * n_obs + i]; });
  s.work_units = system_work(N, P_fine, ctx.gamma_p) +
                 static_cast<double>(beta_p) * system_work(N, P_fine / beta_p, ctx.gamma_p);
  s.wall_seconds = clock.seconds();
  return s;
}

/// phi_{P_fine}^{N_fine} minus the partitioned coarse-particle system run
/// with N_fine / beta_t steps on the coarsened path.
template <ParticleModel Model>
DiffSample sample_joint_diff(const SamplerContext<Model>& ctx, std::size_t P_fine, std::size_t beta_p,
                             std::size_t N_fine, std::size_t beta_t, const SampleKey& key) {
  detail::require_split(P_fine, beta_p, "sample_joint_diff");
  detail::require_split(N_fine, beta_t, "sample_joint_diff");
  detail::Stopwatch clock;
  const auto inputs = draw_inputs(key, ctx.model, P_fine, N_fine, ctx.T);
  const std::span<const RandomInput> all(inputs);
  const std::size_t n_obs = ctx.qoi.size();
  const std::size_t N_coarse = N_fine / beta_t;
  const auto fine = detail::particle_observables(ctx, all, N_fine);
  const auto coarse = detail::partitioned_observables(ctx, all, beta_p, N_coarse);
  DiffSample s;
  s.values = detail::particle_mean(P_fine, n_obs, [&](std::size_t q, std::size_t i) {
    return fine[q * n_obs + i] - coarse[q * n_obs + i];
  });
  s.fine_values =
      detail::particle_mean(P_fine, n_obs, [&](std::size_t q, std::size_t i) { return fine[q * n_obs + i]; });
  s.work_units = system_work(N_fine, P_fine, ctx.gamma_p) +
                 static_cast<double>(beta_p) * system_work(N_coarse, P_fine / beta_p, ctx.gamma_p);
  s.wall_seconds = clock.seconds();
  return s;
}

/// First-order mixed difference at alpha = (particle index, time index):
/// (phi_{P_a1}^{N_a2} - phihat_{P_a1-1}^{N_a2}) - (phi_{P_a1}^{N_a2-1} - phihat_{P_a1-1}^{N_a2-1}),
/// where terms with a -1 index are zero. All terms share one input draw at
/// N_a2 steps and the coarse-particle terms use the same partition blocks.
template <ParticleModel Model>
DiffSample sample_mixed_diff(const SamplerContext<Model>& ctx, std::array<int, 2> alpha, const Hierarchy& h,
                             const SampleKey& key) {
  if (alpha[0] < 0 || alpha[1] < 0) throw invalid_input("sample_mixed_diff: negative multi-index");
  h.validate();
  detail::Stopwatch clock;
  const bool coarse_p = alpha[0] > 0;
  const bool coarse_n = alpha[1] > 0;
  const std::size_t P = h.particles(alpha[0]);
  const std::size_t N = h.steps(alpha[1]);
  const std::size_t Pc = coarse_p ? h.particles(alpha[0] - 1) : 0;
  const std::size_t Nc = coarse_n ? h.steps(alpha[1] - 1) : 0;
  const std::size_t n_obs = ctx.qoi.size();

  const auto inputs = draw_inputs(key, ctx.model, P, N, ctx.T);
  const std::span<const RandomInput> all(inputs);
  const std::vector<double> none;
  const auto ff = detail::particle_observables(ctx, all, N);
  const auto cf = coarse_p ? detail::partitioned_observables(ctx, all, h.beta_p, N) : none;
  const auto fc = coarse_n ? detail::particle_observables(ctx, all, Nc) : none;
  const auto cc = coarse_p && coarse_n ? detail::partitioned_observables(ctx, all, h.beta_p, Nc) : none;

  auto term = [n_obs](const std::vector<double>& v, std::size_t q, std::size_t i) {
    return v.empty() ? 0.0 : v[q * n_obs + i];
  };
  DiffSample s;
  s.values = detail::particle_mean(P, n_obs, [&](std::size_t q, std::size_t i) {
    return (term(ff, q, i) - term(cf, q, i)) - (term(fc, q, i) - term(cc, q, i));
  });
  s.fine_values = detail::particle_mean(P, n_obs, [&](std::size_t q, std::size_t i) { return ff[q * n_obs + i]; });

  const double beta = static_cast<double>(h.beta_p);
  s.work_units = system_work(N, P, ctx.gamma_p);
  if (coarse_p) s.work_units += beta * system_work(N, Pc, ctx.gamma_p);
  if (coarse_n) s.work_units += system_work(Nc, P, ctx.gamma_p);
  if (coarse_p && coarse_n) s.work_units += beta * system_work(Nc, Pc, ctx.gamma_p);
  s.wall_seconds = clock.seconds();
  return s;
}

}  // namespace mfmc
