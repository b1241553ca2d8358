#pragma once

#include <stdexcept>
#include <string>

namespace rdmm {

/// Bad argument to an operation (wrong length, non-positive size, wrong kind).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Query outside the domain of a grid or track.
class OutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A problem instance has no feasible point (dispatch balance, leg timing).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method blew up (NaN/Inf or unbounded growth).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The trajectory optimizer could not converge from any start.
class OptimizationError : public std::runtime_error {
 public:
  OptimizationError(const std::string& what, std::string iterate_dump)
      : std::runtime_error(what), dump_(std::move(iterate_dump)) {}
  const std::string& iterate_dump() const noexcept { return dump_; }

 private:
  std::string dump_;
};

/// Scenario validation or parse failure.  `field_path` points at the
/// offending element, e.g. `accs[1].agents[0].y_max`.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string field_path, const std::string& message)
      : std::runtime_error(field_path.empty() ? message : field_path + ": " + message),
        path_(std::move(field_path)) {}
  const std::string& field_path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace rdmm
