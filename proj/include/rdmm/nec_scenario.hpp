#pragma once

#include <vector>

#include "rdmm/scenario.hpp"

// Northeast Corridor case study: University Park -> Providence -> New Haven
// across four ACCs.  Distances are along-track approximations.
namespace rdmm {

struct NecOptions {
  double providence_m = 47'000.0;
  double new_haven_m = 227'000.0;
  std::vector<double> acc_boundaries_m{0.0, 30'000.0, 90'000.0, 160'000.0, 227'000.0};

  // Seconds after midnight.  Acela 2155 leaves University Park at 06:21.
  double departure_s = 6 * 3600.0 + 21 * 60.0;
  double providence_arrival_s = 6 * 3600.0 + 46 * 60.0;
  double providence_dwell_s = 120.0;
  double new_haven_arrival_s = 8 * 3600.0 + 3 * 60.0;

  double horizon_start_s = 6 * 3600.0 + 20 * 60.0;
  int intervals = 12;
  double interval_length_s = 600.0;
  double curvature = 1e-6;  // c of every agent, $/kWh^2
  bool with_train = true;
};

/// ACC ids in track order.
std::vector<std::string> nec_acc_ids();

/// Deterministic 5-minute price series over one day for the four ACCs, with
/// a morning ramp and a congested third ACC (over 2x the cheapest).
std::vector<PriceSeries> synthetic_nec_prices();

/// Builds the case study from one price series per ACC.  Capacities are kW,
/// so setpoint bounds are capacity times the interval length in hours.
/// Network connections may export up to their capacity.
Scenario build_nec_scenario(const std::vector<PriceSeries>& prices, const NecOptions& options = {});

}  // namespace rdmm
