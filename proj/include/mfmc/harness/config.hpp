#pragma once

// Experiment configuration read from an INI file.
//
//   [model]      family=kuramoto sigma T theta_low theta_high x0_mean
//                x0_variance coupling scheme observables=cos,sin
//                combiner=synchronization|none
//   [hierarchy]  P0 N0 beta_p beta_t fixed_P fixed_N
//   [rates]      gamma_p s_p s_t time_particles particle_steps
//   [budget]     tols=0.2,0.1 theta epsilon
//   [execution]  master_seed workers level_cap level_init pilot
//   [output]     dir reference
//
// Every key is optional; missing keys keep the defaults below.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mfmc/errors.hpp"
#include "mfmc/estimators.hpp"
#include "mfmc/model.hpp"
#include "mfmc/samplers.hpp"
#include "mfmc/stepping.hpp"

namespace mfmc::harness {

struct RunConfig {
  std::string family = "kuramoto";
  KuramotoSpec kuramoto;
  double T = 1.0;
  Scheme scheme = Scheme::milstein;
  std::vector<std::string> observables{"cos", "sin"};
  std::string combiner = "synchronization";

  Hierarchy hierarchy;
  std::size_t fixed_P = 0;
  std::size_t fixed_N = 0;

  double gamma_p = 2.0;
  double s_p = 1.0;
  double s_t = 2.0;
  std::size_t time_particles = 0;  ///< P for time-difference rates (0: P0)
  std::size_t particle_steps = 0;  ///< N for particle-difference rates (0: N0)

  std::vector<double> tols{0.2, 0.1, 0.05, 0.025, 0.0125};
  double theta = 0.5;
  double epsilon = 0.05;

  std::uint64_t master_seed = 20240101;
  std::size_t workers = 0;
  int level_cap = 12;
  int level_init = 2;
  int pilot = 25;

  std::string output_dir = "results";
  std::string reference;  ///< path of a stored reference report (JSON)

  void validate() const {
    if (family != "kuramoto") throw invalid_input("config: unknown model family '" + family + "'");
    hierarchy.validate();
    if (!(T > 0.0)) throw invalid_input("config: T must be positive");
    if (observables.empty()) throw invalid_input("config: no observables");
    if (combiner != "synchronization" && combiner != "none") {
      throw invalid_input("config: combiner must be 'synchronization' or 'none'");
    }
    if (combiner == "synchronization" && (observables.size() != 2 || observables[0] != "cos" || observables[1] != "sin")) {
      throw invalid_input("config: the synchronization combiner needs observables=cos,sin");
    }
    for (std::size_t i = 0; i < tols.size(); ++i) {
      if (!(tols[i] > 0.0)) throw invalid_input("config: tolerances must be positive");
      if (i > 0 && !(tols[i] < tols[i - 1])) throw invalid_input("config: tolerances must be strictly decreasing");
    }
    ErrorBudget{1.0, theta, epsilon}.validate();
    if (pilot < 2) throw invalid_input("config: pilot must be >= 2");
    if (level_init < 0 || level_cap < level_init) throw invalid_input("config: need 0 <= level_init <= level_cap");
    if (level_cap > 255) throw invalid_input("config: level_cap must be <= 255");
  }

  KuramotoModel model() const {
    KuramotoSpec spec = kuramoto;
    return KuramotoModel(spec);
  }

  QoISpec qoi() const {
    if (combiner == "synchronization") return kuramoto_synchronization_qoi();
    QoISpec q;
    for (const auto& name : observables) q.observables.push_back(named_observable(name));
    return q;
  }

  ErrorBudget budget(double tol) const { return {tol, theta, epsilon}; }

  EstimatorSettings settings(std::uint64_t seed) const {
    EstimatorSettings s;
    s.T = T;
    s.scheme = scheme;
    s.gamma_p = gamma_p;
    s.s_p = s_p;
    s.s_t = s_t;
    s.master_seed = seed;
    s.pilot = pilot;
    s.level_init = level_init;
    s.level_cap = level_cap;
    s.workers = resolve_workers(workers);
    s.fixed_particles = fixed_P;
    s.fixed_steps = fixed_N;
    return s;
  }
};

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw invalid_input("config: '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

inline RunConfig config_from_tree(const boost::property_tree::ptree& tree) {
  RunConfig c;
  auto get = [&](const char* path, auto fallback) {
    const auto child = tree.get_child_optional(path);
    if (!child) return fallback;
    try {
      return child->template get_value<decltype(fallback)>();
    } catch (const boost::property_tree::ptree_bad_data&) {
      throw invalid_input(std::string("config: bad value for ") + path);
    }
  };
  c.family = get("model.family", c.family);
  c.kuramoto.sigma = get("model.sigma", c.kuramoto.sigma);
  c.T = get("model.T", c.T);
  c.kuramoto.theta_low = get("model.theta_low", c.kuramoto.theta_low);
  c.kuramoto.theta_high = get("model.theta_high", c.kuramoto.theta_high);
  c.kuramoto.x0_mean = get("model.x0_mean", c.kuramoto.x0_mean);
  c.kuramoto.x0_variance = get("model.x0_variance", c.kuramoto.x0_variance);
  c.kuramoto.coupling = get("model.coupling", c.kuramoto.coupling);
  c.scheme = parse_scheme(get("model.scheme", to_string(c.scheme)));
  if (auto v = tree.get_optional<std::string>("model.observables")) c.observables = split_list(*v);
  c.combiner = get("model.combiner", c.combiner);

  c.hierarchy.P0 = get("hierarchy.P0", c.hierarchy.P0);
  c.hierarchy.N0 = get("hierarchy.N0", c.hierarchy.N0);
  c.hierarchy.beta_p = get("hierarchy.beta_p", c.hierarchy.beta_p);
  c.hierarchy.beta_t = get("hierarchy.beta_t", c.hierarchy.beta_t);
  c.fixed_P = get("hierarchy.fixed_P", c.fixed_P);
  c.fixed_N = get("hierarchy.fixed_N", c.fixed_N);

  c.gamma_p = get("rates.gamma_p", c.gamma_p);
  c.s_p = get("rates.s_p", c.s_p);
  c.s_t = get("rates.s_t", c.s_t);
  c.time_particles = get("rates.time_particles", c.time_particles);
  c.particle_steps = get("rates.particle_steps", c.particle_steps);

  if (auto v = tree.get_optional<std::string>("budget.tols")) c.tols = parse_doubles(*v);
  c.theta = get("budget.theta", c.theta);
  c.epsilon = get("budget.epsilon", c.epsilon);

  c.master_seed = get("execution.master_seed", c.master_seed);
  c.workers = get("execution.workers", c.workers);
  c.level_cap = get("execution.level_cap", c.level_cap);
  c.level_init = get("execution.level_init", c.level_init);
  c.pilot = get("execution.pilot", c.pilot);

  c.output_dir = get("output.dir", c.output_dir);
  c.reference = get("output.reference", c.reference);
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  if (!std::ifstream(path)) throw io_error("cannot open config file '" + path + "'");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw invalid_input(std::string("config: ") + e.what());
  }
  return config_from_tree(tree);
}

inline RunConfig config_from_string(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw invalid_input(std::string("config: ") + e.what());
  }
  return config_from_tree(tree);
}

}  // namespace mfmc::harness
