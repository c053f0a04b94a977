#pragma once

#include <stdexcept>
#include <string>

namespace mfmc {

/// Precondition violated by a caller-supplied argument.
class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fine and coarse discretizations cannot share one Brownian path
/// (step counts or particle counts are not integer multiples).
class coupling_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The requested time-stepping scheme needs model information that is missing.
class unsupported_scheme : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Rate parameters that make a penalty weight of the index set non-positive.
class degenerate_profile : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The estimator could not meet the bias target before hitting the level cap.
class budget_infeasible : public std::runtime_error {
 public:
  budget_infeasible(const std::string& what, std::string diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}

  /// JSON object text describing the state at failure.
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

/// A file could not be read or written.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfmc
