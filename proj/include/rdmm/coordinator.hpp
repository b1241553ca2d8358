#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rdmm/dispatch.hpp"
#include "rdmm/scenario.hpp"
#include "rdmm/train_dispatch.hpp"

// Forecast loop coupling the per-ACC markets with the trains' best responses.
namespace rdmm {

/// Train traction per ACC and interval in kW, load negative: the train's
/// electrical energy inside the ACC during the interval over the interval
/// length.  Energy outside the horizon is dropped.
std::vector<std::vector<double>> aggregate_traction(std::span<const Trajectory> trajectories,
                                                    const HorizonGrid& grid,
                                                    std::span<const AccDescriptor> track);

/// Train-facing prices from per-ACC electric prices in $/kWh.
PriceFunction compose_train_prices(const std::vector<std::vector<double>>& lambda_e_usd_per_kwh,
                                   const HorizonGrid& grid);

/// Network price series averaged per interval, $/kWh, one row per ACC.
std::vector<std::vector<double>> bootstrap_prices(const Scenario& scenario);

struct ForecastIterate {
  int j = 0;
  std::vector<dispatch::DispatchResult> dispatch;   // per ACC
  std::vector<Trajectory> trajectories;             // per train
  std::vector<std::vector<double>> traction_kw;     // per ACC, length M
  std::vector<std::vector<double>> train_prices;    // $/kWh the trains solved against
  double delta_y = 0.0;       // relative inf-norm change from the previous iterate
  double delta_lambda = 0.0;
  double train_cost_usd = 0.0;  // trips priced at this iterate's equilibrium
  double damping = 1.0;         // rho used to form the next train prices
  bool oscillation = false;
  bool cost_increase = false;
};

struct AgentSettlement {
  std::string agent_id;
  std::size_t acc = 0;
  std::vector<double> y_kwh;        // length M
  std::vector<double> revenue_usd;  // per interval
};

struct TrainSettlement {
  std::string train_id;
  double trip_cost_usd = 0.0;  // whole trip at the settlement prices (held past the horizon)
  double energy_j = 0.0;
  double work_j = 0.0;
  std::vector<std::vector<double>> payment_usd;  // per ACC and interval, inside the horizon
};

struct Settlement {
  HorizonGrid horizon{0.0, 1, 1.0};
  std::vector<std::string> acc_ids;
  std::vector<dispatch::PriceDuple> prices;           // $/kWh per ACC
  std::vector<AgentSettlement> agents;
  std::vector<std::vector<double>> traction_kw;       // per ACC
  std::vector<std::vector<double>> passive_electric_kw;
  std::vector<std::vector<double>> passive_thermal_kw;
  std::vector<std::vector<double>> passive_payment_usd;
  std::vector<TrainSettlement> trains;
  std::vector<bool> market_converged;                 // per ACC
  bool converged = false;
  int iterations = 0;

  /// Largest |train + passive payments - agent revenues| over ACCs and intervals.
  double payment_imbalance() const;
  double total_train_cost() const;
};

struct RdmmResult {
  Settlement settlement;
  std::vector<ForecastIterate> log;
  std::vector<Trajectory> trajectories;  // at the settled iterate
  std::size_t settled_iterate = 0;       // index into log
};

/// Optional observer, called after each forecast iteration.
using IterateObserver = std::function<void(const ForecastIterate&)>;

/// Alternates train dispatch and per-ACC negotiation until successive
/// equilibria agree.  Without convergence the iterate closest to the exit
/// test is settled and flagged.
RdmmResult run_rdmm(const Scenario& scenario, const IterateObserver& observer = {});

/// Settlement of one iterate: payments at that iterate's prices.
Settlement settle(const Scenario& scenario, const ForecastIterate& iterate, bool converged);

struct RollingInputs {
  std::vector<PassiveProfiles> passive;  // replacements by id; others are shifted
  std::vector<PriceSeries> prices;       // replacements by ACC id
};

struct RollingAdvance {
  Scenario scenario;
  std::vector<std::string> warnings;
};

/// Shifts the horizon one interval forward.  Per-interval agent parameters
/// and passive profiles move one slot left with the last entry repeated.
/// A price series that stops short of the new horizon is extended with its
/// last price and reported as truncated.
RollingAdvance rolling_advance(const Scenario& scenario, const RollingInputs& inputs = {});

}  // namespace rdmm
