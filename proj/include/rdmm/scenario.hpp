#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rdmm/core.hpp"
#include "rdmm/dispatch.hpp"
#include "rdmm/train_dispatch.hpp"

namespace rdmm {

/**
 * Wholesale price samples for one ACC.  Each sample holds until the next;
 * the last one holds for the spacing of the previous pair (forever if it is
 * the only sample).
 */
struct PriceSeries {
  std::string acc_id;
  std::vector<double> timestamps_s;
  std::vector<double> usd_per_mwh;

  void validate() const;
  double at(double t) const;                  // $/MWh
  double mean(double t0, double t1) const;    // time average over [t0, t1], $/MWh
  double coverage_end() const;
  bool covers(double t0, double t1) const;

  bool operator==(const PriceSeries&) const = default;
};

/// One train and its route; the scenario supplies the track.
struct TrainRun {
  TrainSpec train;
  Timetable timetable;
  GradeProfile grade;
  SpeedLimitProfile speed_limit;

  bool operator==(const TrainRun&) const = default;
};

struct SolverSettings {
  dispatch::StepSizes dispatch;
  TrainSolverConfig train;
  double damping = 1.0;              // rho: weight of the newest equilibrium in train prices
  double oscillation_damping = 0.5;  // rho once a period-2 cycle or cost rise is seen
  int jobs = 0;                      // worker count; 0 = hardware concurrency

  bool operator==(const SolverSettings&) const = default;
};

struct Scenario {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::string name;
  HorizonGrid horizon{0.0, 12, 600.0};
  std::vector<AccDescriptor> track;
  std::vector<DispatchableAgent> agents;
  std::vector<PassiveProfiles> passive;
  std::vector<TrainRun> trains;
  std::vector<PriceSeries> prices;
  std::uint64_t seed = 1;
  SolverSettings solver;

  TripDefinition trip(std::size_t train) const;
  const DispatchableAgent& agent(const std::string& id) const;
  const PassiveProfiles& passive_profile(const std::string& id) const;
  /// Null when the ACC has no price series.
  const PriceSeries* price_series(const std::string& acc_id) const;

  /// Throws ScenarioError with the path of the first offending field.
  void validate() const;

  bool operator==(const Scenario&) const = default;
};

/// Interval means of the ACC's price series in $/kWh over the horizon.
std::vector<double> interval_prices_usd_per_kwh(const PriceSeries& series, const HorizonGrid& grid);

/// Agents of ACC `acc`, network connections priced at their ACC's series.
std::vector<DispatchableAgent> acc_agents(const Scenario& scenario, std::size_t acc);

/// Summed passive forecasts of ACC `acc` at forecast instance `j`, in kW.
dispatch::NetLoads acc_passive_loads(const Scenario& scenario, std::size_t acc, std::size_t j);

}  // namespace rdmm
