#pragma once

#include <filesystem>
#include <iosfwd>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rdmm/scenario.hpp"

namespace rdmm::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kSolverError = 2 };

struct RunConfig {
  std::string subcommand;
  std::filesystem::path scenario;
  std::filesystem::path out = ".";

  std::optional<double> dt_s;
  std::optional<int> intervals;
  std::optional<double> interval_length_s;
  std::optional<double> tol_k;
  std::optional<double> tol_j;
  std::optional<double> damping;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;

  bool oracle = false;
  bool min_work = false;
  std::optional<std::filesystem::path> trace;
  bool no_train = false;  // nec only
};

/// Applies the command-line overrides.  A new interval count truncates
/// per-interval data or repeats the last entry; a new interval length scales
/// agent setpoint bounds, which are energies per interval.
void apply_overrides(Scenario& scenario, const RunConfig& config);

/// Runs one invocation.  `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rdmm::cli
