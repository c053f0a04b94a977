#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mfmc/errors.hpp"

namespace mfmc {

/// Least-squares line through (level, log2 |value|).
struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  int points_used = 0;
  int zero_points = 0;  ///< points dropped because the value was exactly zero
};

struct RateFitOptions {
  /// Drop the coarsest level when at least five usable points remain.
  bool drop_coarsest = true;
};

inline RateFit fit_log2_rate(const std::vector<std::pair<int, double>>& points, RateFitOptions options = {}) {
  RateFit fit;
  std::vector<std::pair<int, double>> usable;
  for (const auto& [level, value] : points) {
    if (value == 0.0) {
      ++fit.zero_points;
    } else if (std::isfinite(value)) {
      usable.emplace_back(level, std::log2(std::abs(value)));
    }
  }
  std::sort(usable.begin(), usable.end());
  if (options.drop_coarsest && usable.size() >= 5) usable.erase(usable.begin());
  if (usable.size() < 3) throw invalid_input("fit_log2_rate: fewer than 3 non-zero points");

  const double n = static_cast<double>(usable.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : usable) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : usable) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) throw invalid_input("fit_log2_rate: all points share one level");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (const auto& [x, y] : usable) {
    const double r = y - (fit.intercept + fit.slope * x);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / n);
  fit.points_used = static_cast<int>(usable.size());
  return fit;
}

/// Work = O(TOL^-a log(TOL^-1)^b).
struct ComplexityLaw {
  double tol_exponent = 0.0;
  double log_exponent = 0.0;

  friend bool operator==(const ComplexityLaw&, const ComplexityLaw&) = default;
};

inline std::string to_string(const ComplexityLaw& law) {
  auto num = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  return "(" + num(law.tol_exponent) + "," + num(law.log_exponent) + ")";
}

namespace detail {
inline bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}
}  // namespace detail

/// Optimal MLMC work exponent with one level-dependent discretization
/// (bias rate w, variance rate s, cost rate gamma) and one parameter fixed
/// by the tolerance (bias rate w_tilde, variance factor c_tilde, cost rate g_tilde).
inline ComplexityLaw mlmc_complexity(double w_tilde, double c_tilde, double g_tilde, double s, double gamma,
                                     double w) {
  if (!(w_tilde > 0.0) || !(w > 0.0)) throw invalid_input("mlmc_complexity: bias rates must be positive");
  if (!(s > 0.0) || !(gamma > 0.0)) throw invalid_input("mlmc_complexity: s and gamma must be positive");
  if (!(c_tilde >= 0.0) || !(g_tilde >= 0.0)) throw invalid_input("mlmc_complexity: negative fixed-parameter rate");
  if (s > 2.0 * w && !detail::nearly_equal(s, 2.0 * w)) throw invalid_input("mlmc_complexity: requires s <= 2w");
  ComplexityLaw law;
  law.tol_exponent = 2.0 + (g_tilde - c_tilde) / w_tilde;
  if (detail::nearly_equal(s, gamma)) {
    law.log_exponent = 2.0;
  } else if (s < gamma) {
    law.tol_exponent += (gamma - s) / w;
  }
  return law;
}

/// Optimal MIMC work exponent for the particle/time index set with
/// beta_p = beta_t.
inline ComplexityLaw mimc_complexity(double s_p, double s_t, double gamma_p) {
  if (!(s_p >= 0.0) || !(s_t > 0.0) || !(gamma_p >= 1.0)) {
    throw invalid_input("mimc_complexity: requires s_p >= 0, s_t > 0, gamma_p >= 1");
  }
  const double zeta = std::max((gamma_p - s_p - 1.0) / 2.0, (1.0 - s_t) / 2.0);
  const double z = detail::nearly_equal(gamma_p - s_p - 1.0, 1.0 - s_t) ? 2.0 : 1.0;
  const double xi = std::min((2.0 - s_p) / gamma_p, 2.0 - s_t);
  ComplexityLaw law;
  if (std::abs(zeta) <= 1e-12) {
    law.log_exponent = 2.0 * z;
  } else if (zeta < 0.0) {
    law.log_exponent = 0.0;
  } else if (std::abs(xi) <= 1e-12) {
    law.log_exponent = 1.0 + 2.0 * (z - 1.0) * (zeta + 1.0);
  } else if (xi > 0.0) {
    law.log_exponent = 2.0 * (z - 1.0) * (zeta + 1.0);
  } else {
    throw invalid_input("mimc_complexity: xi < 0 is outside the known complexity cases");
  }
  law.tol_exponent = 2.0 + 2.0 * std::max(0.0, zeta);
  return law;
}

inline ComplexityLaw mc_complexity(double gamma_p) { return {2.0 + gamma_p, 0.0}; }

/// MLMC over the time-step count with the particle count fixed by the tolerance.
inline ComplexityLaw mlmc_time_complexity(double s_t, double gamma_p) {
  return mlmc_complexity(1.0, 1.0, gamma_p, s_t, 1.0, 1.0);
}

/// MLMC over the particle count with the time-step count fixed by the tolerance.
inline ComplexityLaw mlmc_particle_complexity(double s_p, double gamma_p) {
  return mlmc_complexity(1.0, 0.0, 1.0, s_p + 1.0, gamma_p, 1.0);
}

/// MLMC refining both counts per level.
inline ComplexityLaw mlmc_joint_complexity(double s_p, double s_t, double gamma_p, double beta_p = 2.0,
                                           double beta_t = 2.0) {
  const double lp = std::log(beta_p), lt = std::log(beta_t);
  const double s = lp + std::min(s_p * lp, s_t * lt);
  const double gamma = gamma_p * lp + lt;
  const double w = std::min(lp, lt);
  return mlmc_complexity(1.0, 0.0, 0.0, s, gamma, w);
}

enum class MethodRow { mc, mlmc_time, mlmc_particle, mlmc_joint, mimc };

inline constexpr std::array<MethodRow, 5> kMethodRows = {MethodRow::mc, MethodRow::mlmc_time, MethodRow::mlmc_particle,
                                                         MethodRow::mlmc_joint, MethodRow::mimc};

inline std::string to_string(MethodRow m) {
  switch (m) {
    case MethodRow::mc: return "MC";
    case MethodRow::mlmc_time: return "MLMC (time hierarchy)";
    case MethodRow::mlmc_particle: return "MLMC (particle hierarchy)";
    case MethodRow::mlmc_joint: return "MLMC (joint hierarchy)";
    case MethodRow::mimc: return "MIMC";
  }
  return "?";
}

inline ComplexityLaw predict(MethodRow method, double s_p, double s_t, double gamma_p) {
  switch (method) {
    case MethodRow::mc: return mc_complexity(gamma_p);
    case MethodRow::mlmc_time: return mlmc_time_complexity(s_t, gamma_p);
    case MethodRow::mlmc_particle: return mlmc_particle_complexity(s_p, gamma_p);
    case MethodRow::mlmc_joint: return mlmc_joint_complexity(s_p, s_t, gamma_p);
    case MethodRow::mimc: return mimc_complexity(s_p, s_t, gamma_p);
  }
  return {};
}

/// Column order of the reference matrix: (s_t, gamma_p).
inline constexpr std::array<std::pair<double, double>, 4> kMatrixColumns = {
    std::pair{1.0, 1.0}, std::pair{1.0, 2.0}, std::pair{2.0, 1.0}, std::pair{2.0, 2.0}};

/// Work complexity of every method for s_t, gamma_p in {1, 2} with the
/// partitioning particle sampler (s_p = 1).
inline std::array<std::array<ComplexityLaw, 4>, 5> table1() {
  std::array<std::array<ComplexityLaw, 4>, 5> out{};
  for (std::size_t r = 0; r < kMethodRows.size(); ++r) {
    for (std::size_t c = 0; c < kMatrixColumns.size(); ++c) {
      out[r][c] = predict(kMethodRows[r], 1.0, kMatrixColumns[c].first, kMatrixColumns[c].second);
    }
  }
  return out;
}

/// Downward-closed set {alpha : w1 alpha1 + w2 alpha2 <= L}.
struct MultiIndexSet {
  std::array<double, 2> weights{1.0, 1.0};
  double level = 0.0;
  std::vector<std::array<int, 2>> members;  ///< sorted lexicographically

  bool contains(std::array<int, 2> a) const { return std::binary_search(members.begin(), members.end(), a); }

  bool is_downward_closed() const {
    for (const auto& a : members) {
      if (a[0] > 0 && !contains({a[0] - 1, a[1]})) return false;
      if (a[1] > 0 && !contains({a[0], a[1] - 1})) return false;
    }
    return true;
  }
};

inline MultiIndexSet build_index_set_weighted(double L, double w1, double w2) {
  if (!(w1 > 0.0) || !(w2 > 0.0)) throw degenerate_profile("index set weights must be positive");
  MultiIndexSet set;
  set.weights = {w1, w2};
  set.level = L;
  const double slack = 1e-12 * std::max(1.0, std::abs(L));
  for (int a1 = 0; w1 * a1 <= L + slack; ++a1) {
    for (int a2 = 0; w1 * a1 + w2 * a2 <= L + slack; ++a2) set.members.push_back({a1, a2});
  }
  return set;
}

/// Optimal MIMC set with weights (1 - s_p + gamma_p, 3 - s_t).
inline MultiIndexSet build_index_set(double L, double s_p, double s_t, double gamma_p) {
  return build_index_set_weighted(L, 1.0 - s_p + gamma_p, 3.0 - s_t);
}

}  // namespace mfmc
