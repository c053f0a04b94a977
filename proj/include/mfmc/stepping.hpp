#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mfmc/errors.hpp"
#include "mfmc/model.hpp"

namespace mfmc {

enum class Scheme { euler_maruyama, milstein };

inline std::string to_string(Scheme s) { return s == Scheme::milstein ? "milstein" : "euler_maruyama"; }

inline Scheme parse_scheme(const std::string& name) {
  if (name == "milstein") return Scheme::milstein;
  if (name == "euler_maruyama" || name == "euler-maruyama" || name == "em") return Scheme::euler_maruyama;
  throw invalid_input("unknown scheme '" + name + "'");
}

/// Terminal states of one simulated particle system.
struct PathResult {
  std::vector<double> terminal_states;  ///< P x d, row-major
  std::size_t dim = 1;
  std::size_t steps_taken = 0;

  std::size_t particles() const noexcept { return dim == 0 ? 0 : terminal_states.size() / dim; }
  StateView view() const { return StateView(terminal_states, dim); }
};

/// Sums consecutive groups of `beta` increment rows (each row has `dim`
/// entries), in index order.
inline std::vector<double> coarsen_increments(std::span<const double> fine, std::size_t dim,
                                              std::size_t beta) {
  if (dim == 0) throw invalid_input("coarsen_increments: dim must be positive");
  if (beta < 2) throw coupling_error("coarsen_increments: beta must be >= 2");
  const std::size_t rows = fine.size() / dim;
  if (rows * dim != fine.size() || rows % beta != 0) {
    throw coupling_error("coarsen_increments: " + std::to_string(rows) + " steps not divisible by " +
                         std::to_string(beta));
  }
  std::vector<double> coarse(rows / beta * dim, 0.0);
  for (std::size_t k = 0; k < rows / beta; ++k) {
    for (std::size_t c = 0; c < dim; ++c) {
      double sum = fine[(k * beta) * dim + c];
      for (std::size_t j = 1; j < beta; ++j) sum += fine[(k * beta + j) * dim + c];
      coarse[k * dim + c] = sum;
    }
  }
  return coarse;
}

/// Advances all particles N uniform steps with Euler-Maruyama or Milstein.
/// Drift and diffusion of step n are evaluated against the frozen step-n
/// states; then every particle moves. Each input's increments are coarsened
/// on the fly by summing n_fine / N consecutive rows in index order.
///
/// The Milstein correction 0.5 b_kk (d b_kk / d x_k) (dW_k^2 - dt) assumes
/// diagonal noise; for constant diffusion it vanishes and the scheme is
/// Euler-Maruyama.
template <ParticleModel Model>
PathResult simulate_system(const Model& model, std::span<const RandomInput> inputs, std::size_t N,
                           double T, Scheme scheme) {
  if (N == 0) throw invalid_input("simulate_system: N must be positive");
  if (inputs.empty()) throw invalid_input("simulate_system: no particles");
  if (!(T > 0.0)) throw invalid_input("simulate_system: T must be positive");
  const std::size_t P = inputs.size();
  const std::size_t d = model.state_dim();
  const std::size_t k = model.parameter_dim();

  const bool milstein_correction = scheme == Scheme::milstein && !model.has_constant_diffusion();
  if (milstein_correction) {
    if (model.diffusion_depends_on_measure()) {
      throw unsupported_scheme("Milstein is not supported for measure-dependent diffusion");
    }
    if (!model.has_diffusion_derivative()) {
      throw unsupported_scheme("Milstein needs the diffusion state derivative");
    }
  }

  std::vector<std::size_t> ratio(P);
  std::vector<double> x(P * d);
  std::vector<double> thetas(P * k);
  for (std::size_t q = 0; q < P; ++q) {
    const RandomInput& in = inputs[q];
    if (in.x0.size() != d || in.theta.size() != k || in.increments.size() != in.n_fine * d) {
      throw invalid_input("simulate_system: input shape does not match the model");
    }
    if (in.n_fine % N != 0) {
      throw coupling_error("simulate_system: n_fine " + std::to_string(in.n_fine) +
                           " not divisible by N " + std::to_string(N));
    }
    ratio[q] = in.n_fine / N;
    std::copy(in.x0.begin(), in.x0.end(), x.begin() + static_cast<std::ptrdiff_t>(q * d));
    std::copy(in.theta.begin(), in.theta.end(), thetas.begin() + static_cast<std::ptrdiff_t>(q * k));
  }

  const double dt = T / static_cast<double>(N);
  std::vector<double> next(P * d);
  std::vector<double> drift(P * d);
  std::vector<double> b(d * d);
  std::vector<double> db(d * d);
  std::vector<double> dW(d);

  for (std::size_t n = 0; n < N; ++n) {
    const double t = static_cast<double>(n) * dt;
    const StateView states(x, d);
    if constexpr (BatchDriftModel<Model>) {
      model.drift_all(t, states, thetas, drift);
    } else {
      for (std::size_t p = 0; p < P; ++p) {
        model.drift(t, p, states, std::span<const double>(thetas).subspan(p * k, k),
                    std::span<double>(drift).subspan(p * d, d));
      }
    }
    for (std::size_t p = 0; p < P; ++p) {
      const auto theta = std::span<const double>(thetas).subspan(p * k, k);
      const RandomInput& in = inputs[p];
      const std::size_t r = ratio[p];
      for (std::size_t c = 0; c < d; ++c) {
        double sum = in.increments[(n * r) * d + c];
        for (std::size_t j = 1; j < r; ++j) sum += in.increments[(n * r + j) * d + c];
        dW[c] = sum;
      }
      model.diffusion(t, p, states, theta, b);
      if (milstein_correction) model.diffusion_state_derivative(t, p, states, theta, db);
      for (std::size_t row = 0; row < d; ++row) {
        double noise = 0.0;
        for (std::size_t c = 0; c < d; ++c) noise += b[row * d + c] * dW[c];
        double value = x[p * d + row] + drift[p * d + row] * dt + noise;
        if (milstein_correction) {
          for (std::size_t c = 0; c < d; ++c) {
            if (c != row && b[row * d + c] != 0.0) {
              throw unsupported_scheme("Milstein needs diagonal noise");
            }
          }
          const double bkk = b[row * d + row];
          value += 0.5 * bkk * db[row * d + row] * (dW[row] * dW[row] - dt);
        }
        next[p * d + row] = value;
      }
    }
    x.swap(next);
  }
  return PathResult{std::move(x), d, N};
}

}  // namespace mfmc
