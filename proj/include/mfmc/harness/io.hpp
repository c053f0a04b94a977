#pragma once

// CSV and JSON outputs. Every CSV starts with a schema line
// "#schema=<name>/<version>" followed by the column header.

#include <json.hpp>

#include <algorithm>
#include <concepts>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mfmc/errors.hpp"
#include "mfmc/estimators.hpp"

namespace mfmc::harness {

using json = nlohmann::ordered_json;

inline constexpr const char* kRatesSchema = "mfmc.rates/1";
inline constexpr const char* kSweepSchema = "mfmc.sweep/1";
inline constexpr const char* kPPCheckSchema = "mfmc.ppcheck/1";
inline constexpr const char* kReportSchema = "mfmc.report/1";

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::string& schema, const std::vector<std::string>& columns)
      : out_(out), columns_(columns.size()) {
    out_ << "#schema=" << schema << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
  }

  class Row {
   public:
    explicit Row(CsvWriter& w) : w_(w) {}
    Row& operator<<(const std::string& s) { return cell(s); }
    Row& operator<<(const char* s) { return cell(s); }
    Row& operator<<(double v) { return cell(format_number(v)); }
    template <std::integral I>
    Row& operator<<(I v) {
      return cell(std::to_string(v));
    }
    ~Row() noexcept(false) {
      if (cells_.size() != w_.columns_) throw invalid_input("csv: row width does not match the header");
      for (std::size_t i = 0; i < cells_.size(); ++i) w_.out_ << (i ? "," : "") << cells_[i];
      w_.out_ << '\n';
    }

   private:
    Row& cell(std::string s) {
      cells_.push_back(std::move(s));
      return *this;
    }
    CsvWriter& w_;
    std::vector<std::string> cells_;
  };

  Row row() { return Row(*this); }

  /// Free-form trailing line, written as a comment.
  void comment(const std::string& text) { out_ << '#' << text << '\n'; }

 private:
  std::ostream& out_;
  std::size_t columns_;
};

inline std::ofstream open_output(const std::string& path) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  return out;
}

inline void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw io_error("write to '" + path + "' failed");
}

inline json key_json(std::array<int, 2> key) {
  if (key[1] < 0) return json(key[0]);
  return json::array({key[0], key[1]});
}

inline json numbers(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(x);
  return out;
}

/// Flattened report. Wall-clock fields all end in "wall_seconds" so that
/// determinism checks can drop them by name.
inline json report_json(const EstimateReport& r) {
  json j;
  j["schema"] = kReportSchema;
  j["method"] = r.method;
  j["master_seed"] = r.master_seed;
  j["observables"] = r.observables;
  j["estimate"] = numbers(r.estimate);
  j["combined"] = r.combined ? json(*r.combined) : json(nullptr);
  j["estimator_variance"] = numbers(r.estimator_variance);
  j["bias_estimate"] = numbers(r.bias_estimate);
  j["total_work_units"] = r.total_work_units;
  j["calibration_work_units"] = r.calibration_work_units;
  j["max_sample_work"] = r.max_sample_work;
  j["total_wall_seconds"] = r.total_wall_seconds;
  j["budget"] = {{"tol", r.budget.tol},
                 {"theta", r.budget.theta},
                 {"epsilon", r.budget.epsilon},
                 {"c_eps", r.budget.c_eps()},
                 {"component_tol", r.component_tol}};
  j["final_level"] = r.final_level;
  j["max_particle_level"] = r.max_particle_level;
  j["max_time_level"] = r.max_time_level;
  if (r.fixed_particles) j["fixed_particles"] = r.fixed_particles;
  if (r.fixed_steps) j["fixed_steps"] = r.fixed_steps;
  json set = json::array();
  for (const auto& a : r.index_set) set.push_back(json::array({a[0], a[1]}));
  j["index_set"] = set;
  j["allocation_degenerate"] = r.allocation_degenerate;
  json levels = json::array();
  for (const auto& l : r.levels) {
    levels.push_back({{"key", key_json(l.key)},
                      {"particles", l.particles},
                      {"steps", l.steps},
                      {"m_taken", l.m_taken},
                      {"mean", numbers(l.mean)},
                      {"variance", numbers(l.variance)},
                      {"fine_mean", numbers(l.fine_mean)},
                      {"work_per_sample", l.work_per_sample},
                      {"total_work", l.total_work},
                      {"wall_seconds", l.wall_seconds},
                      {"max_sample_wall_seconds", l.max_sample_wall}});
  }
  j["levels"] = levels;
  return j;
}

/// Removes every key ending in "wall_seconds", recursively.
inline json strip_wall_clock(json j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k.size() >= 12 && k.compare(k.size() - 12, 12, "wall_seconds") == 0) continue;
      out[k] = strip_wall_clock(it.value());
    }
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(strip_wall_clock(v));
    return out;
  }
  return j;
}

inline json error_json(const std::string& kind, const std::string& message, const std::string& diagnostics = "") {
  json j;
  j["schema"] = kReportSchema;
  j["error"] = kind;
  j["message"] = message;
  if (!diagnostics.empty()) {
    try {
      j["diagnostics"] = json::parse(diagnostics);
    } catch (const json::parse_error&) {
      j["diagnostics"] = diagnostics;
    }
  }
  return j;
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw io_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Scalar a report stands for: the combined value if present, else the
/// first observable.
inline double headline(const EstimateReport& r) {
  if (r.combined) return *r.combined;
  return r.estimate.empty() ? std::numeric_limits<double>::quiet_NaN() : r.estimate.front();
}

inline double headline(const json& report) {
  if (report.contains("combined") && report["combined"].is_number()) return report["combined"].get<double>();
  if (report.contains("estimate") && !report["estimate"].empty()) return report["estimate"][0].get<double>();
  throw io_error("reference report has no estimate");
}

/// Kolmogorov-Smirnov distance of a sample to the standard normal CDF.
inline double ks_distance_normal(std::vector<double> z) {
  if (z.empty()) throw invalid_input("ks_distance_normal: empty sample");
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = normal_cdf(z[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace mfmc::harness
