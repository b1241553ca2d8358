#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rdmm/core.hpp"

// Per-ACC multi-period economic dispatch of dispatchable agents.
//
// Units: setpoints y in kWh per interval, forecasts in kW, prices in $/kWh.
// Balance per interval K (energies, generation positive):
//   c_e  = h * L_e[K]  + sum_i d_e[i,K]  * y[i,K] = 0
//   c_th = h * L_th[K] + sum_i d_th[i,K] * y[i,K] = 0
// with h the interval length in hours and L_e = P_re + P_T + P_e.
namespace rdmm::dispatch {

/// Curvature given to linear-cost agents so every setpoint is unique.
inline constexpr double kDefaultCMin = 1e-6;

/// Fixed (non-dispatchable) injections seen by one ACC, in kW per interval.
struct NetLoads {
  std::vector<double> electric_kw;  // renewable + traction + electric load
  std::vector<double> thermal_kw;
  double interval_hours = 1.0;

  std::size_t size() const noexcept { return electric_kw.size(); }
  void validate(std::size_t intervals) const;
};

struct AgentOutputs {
  std::vector<double> electric;
  std::vector<double> thermal;
};

struct PriceDuple {
  std::vector<double> electric;  // $/kWh
  std::vector<double> thermal;   // $/kWh

  bool operator==(const PriceDuple&) const = default;
};

/// Electric and thermal output profiles d_e*y and d_th*y.
AgentOutputs agent_outputs(const DispatchableAgent& agent, std::span<const double> y);

/// Total cost sum_K a + b y + c y^2 / 2.
double agent_cost(const DispatchableAgent& agent, std::span<const double> y);

/// Network connection priced at the external marginal price pi ($/kWh):
/// a = 0, b = pi, c = c_min.
DispatchableAgent update_network_agent_cost(const DispatchableAgent& agent,
                                            std::span<const double> pi_usd_per_kwh,
                                            double c_min = kDefaultCMin);

/**
 * Iteration parameters.  Agents move a fraction beta_y toward their proximal
 * best response to the posted prices (curvature below c_floor is supplied by
 * the proximal term).  The operator moves prices along the Newton direction of
 * the dual, H^-1 * imbalance with H = sum d d^T / c over agents not held at a
 * bound, scaled by beta_lambda and backtracked until the dual improves.
 * Multipliers relax by beta_mu toward each agent's local bound multiplier.
 */
struct StepSizes {
  double beta_y = 1.0;
  double beta_lambda_e = 1.0;
  double beta_lambda_th = 1.0;
  double beta_mu = 1.0;
  double c_floor = kDefaultCMin;   // minimum curvature seen by the price step
  double bound_weight = 1e-6;      // response weight of agents held at a bound

  double tol_k_y = 1e-9;       // relative change in y for negotiation exit
  double tol_k_lambda = 1e-9;  // relative change in prices for negotiation exit
  double tol_j_y = 1e-3;       // forecast-loop exit
  double tol_j_lambda = 1e-3;
  long k_max = 50'000;
  int j_max = 50;

  int max_halvings = 8;
  long divergence_window = 50;

  void validate() const;
  bool operator==(const StepSizes&) const = default;
};

/// Iterate of one ACC's negotiation.
struct NegotiationState {
  std::vector<std::vector<double>> y;  // [agent][K]
  std::vector<std::vector<double>> mu_plus;
  std::vector<std::vector<double>> mu_minus;
  std::vector<double> lambda_e;
  std::vector<double> lambda_th;
  long iteration = 0;

  /// y at the projection of 0 onto the bounds, zero multipliers.
  static NegotiationState initial(std::span<const DispatchableAgent> agents, std::size_t intervals,
                                  const std::optional<PriceDuple>& lambda_init = std::nullopt);
};

struct DispatchResult {
  std::vector<std::vector<double>> y;
  std::vector<double> lambda_e;
  std::vector<double> lambda_th;
  std::vector<std::vector<double>> mu_plus;
  std::vector<std::vector<double>> mu_minus;
  std::vector<double> residual_e;   // c_e per interval, kWh
  std::vector<double> residual_th;  // c_th per interval, kWh
  long iterations = 0;
  bool converged = false;
  int step_halvings = 0;

  PriceDuple prices() const { return {lambda_e, lambda_th}; }
  NegotiationState state() const;
};

/// Balance residuals (c_e, c_th) for setpoints y.
std::pair<std::vector<double>, std::vector<double>> balance_residuals(
    std::span<const DispatchableAgent> agents, const NetLoads& loads,
    const std::vector<std::vector<double>>& y);

/// One round: the operator moves prices along the dual Newton direction, agents
/// answer the new prices, multipliers follow.  Throws DivergenceError on a
/// non-finite iterate.
NegotiationState negotiation_step(const NegotiationState& state,
                                  std::span<const DispatchableAgent> agents, const NetLoads& loads,
                                  const StepSizes& steps);

/// Runs negotiation_step to the exit test or k_max.  Step sizes are halved
/// and the run restarted when the iterate diverges.
DispatchResult negotiate(std::span<const DispatchableAgent> agents, const NetLoads& loads,
                         const StepSizes& steps,
                         const std::optional<PriceDuple>& lambda_init = std::nullopt);

/// Warm-started negotiation from a previous iterate.
DispatchResult negotiate_from(std::span<const DispatchableAgent> agents, const NetLoads& loads,
                              const StepSizes& steps, NegotiationState start);

/// Direct KKT solve of the per-interval QP by active-set enumeration.
/// Throws InfeasibleError naming the intervals without a solution.
DispatchResult qp_oracle(std::span<const DispatchableAgent> agents, const NetLoads& loads);

struct ForecastUpdate {
  NetLoads loads;
  PriceDuple lambda_init;
  NegotiationState warm_start;
};

/// Replace the forecasts and warm-start from the previous equilibrium.
ForecastUpdate forecast_update(const DispatchResult& previous, NetLoads new_loads);

/// Scaled optimality measures of a dispatch result.
struct KktReport {
  double stationarity = 0.0;     // |dJ/dy - d.lambda + mu+ - mu-| / (1 + |lambda|)
  double balance = 0.0;          // |c| / (1 + load magnitude), worst interval
  double complementarity = 0.0;  // |mu * slack| / ((1 + |lambda|)(1 + |y bound|))
  double bound_violation = 0.0;  // relative
  double multiplier_sign = 0.0;  // most negative mu (>= 0 means ok)

  bool passes(double stationarity_tol = 1e-5, double balance_tol = 1e-6,
              double complementarity_tol = 1e-6) const;
};

KktReport kkt_certificate(std::span<const DispatchableAgent> agents, const NetLoads& loads,
                          const DispatchResult& result);

}  // namespace rdmm::dispatch
