#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rdmm/coordinator.hpp"
#include "rdmm/scenario.hpp"

// Deterministic CSV reports.  Costs carry 2 decimals, physical quantities 6
// significant digits; rows follow scenario order.
namespace rdmm {

std::string format_cost(double usd);
std::string format_quantity(double value);

/// `trajectory_<id><suffix>.csv` with characters unsafe in file names replaced.
std::string trajectory_file_name(const std::string& train_id, const std::string& suffix = "");

/// One row per node: t_s, price_usd_per_mwh (at the train's ACC), x_m,
/// v_mps, power_mw (of the step leaving the node).
void write_trajectory_csv(const Trajectory& traj, std::span<const AccDescriptor> track,
                          const PriceFunction& prices, const std::filesystem::path& path);

/// Per-ACC prices and per-agent setpoints of standalone negotiations.
void write_dispatch_tables(const std::filesystem::path& dir, const Scenario& scenario,
                           std::span<const dispatch::DispatchResult> results);

struct ReportExtras {
  std::vector<Trajectory> min_work;  // per train, priced at the settlement prices
  std::vector<Trajectory> traces;    // evaluated field traces, same pricing
};

/// settlement.csv, agents.csv, iterations.csv, summary.csv, run.csv and one
/// trajectory table per train and profile.
void write_report(const std::filesystem::path& dir, const Scenario& scenario, const RdmmResult& result,
                  const ReportExtras& extras = {});

}  // namespace rdmm
