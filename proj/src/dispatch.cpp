#include "rdmm/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "rdmm/errors.hpp"
#include "rdmm/log.hpp"

namespace rdmm::dispatch {
namespace {

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double inf_norm(const std::vector<std::vector<double>>& v) {
  double m = 0.0;
  for (const auto& row : v) m = std::max(m, inf_norm(row));
  return m;
}

double inf_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double inf_diff(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, inf_diff(a[i], b[i]));
  return m;
}

// Which balance rows any agent can act on.  Rows nobody touches keep a zero
// price; their imbalance is the caller's problem (reported via residuals).
struct ActiveRows {
  bool electric = false;
  bool thermal = false;
};

ActiveRows active_rows(std::span<const DispatchableAgent> agents, std::size_t k) {
  ActiveRows rows;
  for (const auto& ag : agents) {
    rows.electric = rows.electric || ag.d_e[k] != 0.0;
    rows.thermal = rows.thermal || ag.d_th[k] != 0.0;
  }
  return rows;
}

void check_inputs(std::span<const DispatchableAgent> agents, const NetLoads& loads) {
  const std::size_t m = loads.size();
  if (m == 0) throw InvalidArgument("dispatch: empty horizon");
  loads.validate(m);
  for (const auto& ag : agents) ag.validate(m);
}

bool all_finite(const NegotiationState& s) {
  auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  for (const auto& row : s.y)
    if (!ok(row)) return false;
  for (const auto& row : s.mu_plus)
    if (!ok(row)) return false;
  for (const auto& row : s.mu_minus)
    if (!ok(row)) return false;
  return ok(s.lambda_e) && ok(s.lambda_th);
}

double state_scale(const NegotiationState& s) {
  return std::max({inf_norm(s.y), inf_norm(s.lambda_e), inf_norm(s.lambda_th),
                   inf_norm(s.mu_plus), inf_norm(s.mu_minus)});
}

DispatchResult to_result(const NegotiationState& s, std::span<const DispatchableAgent> agents,
                         const NetLoads& loads) {
  DispatchResult r;
  r.y = s.y;
  r.lambda_e = s.lambda_e;
  r.lambda_th = s.lambda_th;
  r.mu_plus = s.mu_plus;
  r.mu_minus = s.mu_minus;
  std::tie(r.residual_e, r.residual_th) = balance_residuals(agents, loads, s.y);
  r.iterations = s.iteration;
  return r;
}

StepSizes halved(StepSizes s) {
  s.beta_y *= 0.5;
  s.beta_lambda_e *= 0.5;
  s.beta_lambda_th *= 0.5;
  s.beta_mu *= 0.5;
  return s;
}

// Iterates from `start` until the exit test; throws DivergenceError when the
// iterate blows up.
DispatchResult run(std::span<const DispatchableAgent> agents, const NetLoads& loads,
                   const StepSizes& steps, NegotiationState state) {
  double window_scale = state_scale(state);
  long window_start = state.iteration;
  const long first = state.iteration;
  // Natural magnitude of the problem: anything far beyond it is divergence.
  double natural = 1.0;
  // A fixed price scale keeps the exit test meaningful when prices are ~0.
  double price_floor = 1e-6;
  for (const auto& ag : agents) {
    const double yb = std::max(inf_norm(ag.y_min), inf_norm(ag.y_max));
    natural = std::max({natural, yb, inf_norm(ag.b) + inf_norm(ag.c) * yb});
    price_floor = std::max(price_floor, 1e-6 * inf_norm(ag.b));
  }
  natural = std::max({natural, loads.interval_hours * inf_norm(loads.electric_kw),
                      loads.interval_hours * inf_norm(loads.thermal_kw)});

  while (state.iteration - first < steps.k_max) {
    NegotiationState next = negotiation_step(state, agents, loads, steps);
    const double dy = inf_diff(next.y, state.y);
    const double dl = std::max(inf_diff(next.lambda_e, state.lambda_e),
                               inf_diff(next.lambda_th, state.lambda_th));
    state = std::move(next);

    const double scale = state_scale(state);
    if (state.iteration - window_start >= steps.divergence_window) {
      const bool growing = scale > 10.0 * window_scale && scale > 10.0 * natural;
      if (growing || scale > 1e6 * natural)
        throw DivergenceError(fmt::format("negotiation diverged at k={} (scale {:.3g})",
                                          state.iteration, scale));
      window_scale = scale;
      window_start = state.iteration;
    }

    const double lam = std::max(inf_norm(state.lambda_e), inf_norm(state.lambda_th));
    if (dy <= steps.tol_k_y * (1.0 + inf_norm(state.y)) &&
        dl <= steps.tol_k_lambda * (lam + price_floor)) {
      DispatchResult r = to_result(state, agents, loads);
      r.converged = true;
      return r;
    }
  }
  return to_result(state, agents, loads);
}

DispatchResult run_with_halving(std::span<const DispatchableAgent> agents, const NetLoads& loads,
                                const StepSizes& steps, const NegotiationState& start) {
  StepSizes current = steps;
  for (int halvings = 0;; ++halvings) {
    try {
      DispatchResult r = run(agents, loads, current, start);
      r.step_halvings = halvings;
      if (!r.converged)
        log::warn("negotiation hit k_max={} without meeting the exit test", current.k_max);
      return r;
    } catch (const DivergenceError& e) {
      if (halvings >= current.max_halvings) throw;
      log::warn("{}; halving step sizes", e.what());
      current = halved(current);
    }
  }
}

}  // namespace

void NetLoads::validate(std::size_t intervals) const {
  if (electric_kw.size() != intervals || thermal_kw.size() != intervals)
    throw InvalidArgument(fmt::format("net loads: expected {} intervals, got {} electric / {} thermal",
                                      intervals, electric_kw.size(), thermal_kw.size()));
  if (!(interval_hours > 0.0)) throw InvalidArgument("net loads: interval length must be positive");
  for (std::size_t k = 0; k < intervals; ++k)
    if (!std::isfinite(electric_kw[k]) || !std::isfinite(thermal_kw[k]))
      throw InvalidArgument(fmt::format("net loads: non-finite forecast at interval {}", k));
}

AgentOutputs agent_outputs(const DispatchableAgent& agent, std::span<const double> y) {
  if (y.size() != agent.horizon())
    throw InvalidArgument(fmt::format("agent {}: setpoint length {} != horizon {}", agent.id,
                                      y.size(), agent.horizon()));
  AgentOutputs out;
  out.electric.resize(y.size());
  out.thermal.resize(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    out.electric[k] = agent.d_e[k] * y[k];
    out.thermal[k] = agent.d_th[k] * y[k];
  }
  return out;
}

double agent_cost(const DispatchableAgent& agent, std::span<const double> y) {
  if (y.size() != agent.horizon())
    throw InvalidArgument(fmt::format("agent {}: setpoint length {} != horizon {}", agent.id,
                                      y.size(), agent.horizon()));
  double total = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k)
    total += agent.a[k] + agent.b[k] * y[k] + 0.5 * agent.c[k] * y[k] * y[k];
  return total;
}

DispatchableAgent update_network_agent_cost(const DispatchableAgent& agent,
                                            std::span<const double> pi_usd_per_kwh, double c_min) {
  if (agent.kind != AgentKind::kNetworkConnection)
    throw InvalidArgument(fmt::format("agent {} is not a network connection", agent.id));
  if (pi_usd_per_kwh.size() != agent.horizon())
    throw InvalidArgument(fmt::format("agent {}: price series length {} != horizon {}", agent.id,
                                      pi_usd_per_kwh.size(), agent.horizon()));
  if (c_min < 0.0) throw InvalidArgument("c_min must be non-negative");
  DispatchableAgent out = agent;
  for (std::size_t k = 0; k < out.horizon(); ++k) {
    out.a[k] = 0.0;
    out.b[k] = pi_usd_per_kwh[k];
    out.c[k] = c_min;
  }
  return out;
}

void StepSizes::validate() const {
  for (double b : {beta_y, beta_lambda_e, beta_lambda_th, beta_mu})
    if (!(b > 0.0 && b <= 1.0)) throw InvalidArgument("step sizes must lie in (0, 1]");
  if (!(c_floor > 0.0)) throw InvalidArgument("c_floor must be positive");
  if (!(bound_weight > 0.0 && bound_weight <= 1.0)) throw InvalidArgument("bound_weight must lie in (0, 1]");
  if (!(tol_k_y > 0.0 && tol_k_lambda > 0.0 && tol_j_y > 0.0 && tol_j_lambda > 0.0))
    throw InvalidArgument("tolerances must be positive");
  if (k_max <= 0 || j_max <= 0) throw InvalidArgument("iteration limits must be positive");
}

NegotiationState NegotiationState::initial(std::span<const DispatchableAgent> agents,
                                           std::size_t intervals,
                                           const std::optional<PriceDuple>& lambda_init) {
  NegotiationState s;
  s.y.resize(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    s.y[i].resize(intervals);
    for (std::size_t k = 0; k < intervals; ++k)
      s.y[i][k] = std::clamp(0.0, agents[i].y_min[k], agents[i].y_max[k]);
  }
  s.mu_plus.assign(agents.size(), std::vector<double>(intervals, 0.0));
  s.mu_minus.assign(agents.size(), std::vector<double>(intervals, 0.0));
  if (lambda_init) {
    if (lambda_init->electric.size() != intervals || lambda_init->thermal.size() != intervals)
      throw InvalidArgument("initial prices must have one entry per interval");
    s.lambda_e = lambda_init->electric;
    s.lambda_th = lambda_init->thermal;
  } else {
    s.lambda_e.assign(intervals, 0.0);
    s.lambda_th.assign(intervals, 0.0);
  }
  return s;
}

NegotiationState DispatchResult::state() const {
  NegotiationState s;
  s.y = y;
  s.mu_plus = mu_plus;
  s.mu_minus = mu_minus;
  s.lambda_e = lambda_e;
  s.lambda_th = lambda_th;
  s.iteration = 0;
  return s;
}

std::pair<std::vector<double>, std::vector<double>> balance_residuals(
    std::span<const DispatchableAgent> agents, const NetLoads& loads,
    const std::vector<std::vector<double>>& y) {
  const std::size_t m = loads.size();
  std::vector<double> ce(m), cth(m);
  for (std::size_t k = 0; k < m; ++k) {
    ce[k] = loads.interval_hours * loads.electric_kw[k];
    cth[k] = loads.interval_hours * loads.thermal_kw[k];
    for (std::size_t i = 0; i < agents.size(); ++i) {
      ce[k] += agents[i].d_e[k] * y[i][k];
      cth[k] += agents[i].d_th[k] * y[i][k];
    }
  }
  return {ce, cth};
}

namespace {

// One interval of the market as seen by the operator during a step.  Agents
// answer a price with a proximal best response around their current setpoint;
// linear agents (c below c_floor) get the missing curvature from the proximal
// term, so the fixed point is the exact KKT point for every c >= 0.
struct IntervalMarket {
  std::span<const DispatchableAgent> agents;
  std::size_t k;
  const std::vector<double>* y_prev;  // current setpoints, one per agent
  double c_floor;
  double load_e;  // h * L_e
  double load_th;

  double prox(std::size_t i) const { return std::max(c_floor - agents[i].c[k], 0.0); }

  double unclamped(std::size_t i, double le, double lt) const {
    const auto& ag = agents[i];
    const double rho = prox(i);
    return (ag.d_e[k] * le + ag.d_th[k] * lt - ag.b[k] + rho * (*y_prev)[i]) / (ag.c[k] + rho);
  }

  double respond(std::size_t i, double le, double lt) const {
    return std::clamp(unclamped(i, le, lt), agents[i].y_min[k], agents[i].y_max[k]);
  }

  // Dual function: min over the boxes of the (proximal) Lagrangian.
  double dual(double le, double lt) const {
    double q = -le * load_e - lt * load_th;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto& ag = agents[i];
      const double y = respond(i, le, lt);
      const double dy = y - (*y_prev)[i];
      q += ag.b[k] * y + 0.5 * ag.c[k] * y * y + 0.5 * prox(i) * dy * dy -
           (ag.d_e[k] * le + ag.d_th[k] * lt) * y;
    }
    return q;
  }
};

}  // namespace

NegotiationState negotiation_step(const NegotiationState& s,
                                  std::span<const DispatchableAgent> agents, const NetLoads& loads,
                                  const StepSizes& steps) {
  const std::size_t m = loads.size();
  const std::size_t n = agents.size();
  NegotiationState next = s;
  next.iteration = s.iteration + 1;
  std::vector<double> y_prev(n);

  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i < n; ++i) y_prev[i] = s.y[i][k];
    const IntervalMarket market{agents, k, &y_prev, steps.c_floor,
                                loads.interval_hours * loads.electric_kw[k],
                                loads.interval_hours * loads.thermal_kw[k]};
    const double le = s.lambda_e[k], lt = s.lambda_th[k];

    // Shortfall and response slope of the agents at the current prices.
    double short_e = -market.load_e, short_th = -market.load_th;
    double h_ee = 0.0, h_et = 0.0, h_tt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ag = agents[i];
      const double target = market.unclamped(i, le, lt);
      const double best = std::clamp(target, ag.y_min[k], ag.y_max[k]);
      short_e -= ag.d_e[k] * best;
      short_th -= ag.d_th[k] * best;
      // Agents held at a bound do not respond to small price moves.
      const bool responsive = target >= ag.y_min[k] && target <= ag.y_max[k];
      const double w = (responsive ? 1.0 : steps.bound_weight) / (ag.c[k] + market.prox(i));
      h_ee += w * ag.d_e[k] * ag.d_e[k];
      h_et += w * ag.d_e[k] * ag.d_th[k];
      h_tt += w * ag.d_th[k] * ag.d_th[k];
    }

    // Operator: Newton direction on the dual, damped by beta and backtracked
    // until the dual objective improves.
    const ActiveRows rows = active_rows(agents, k);
    double dir_e = 0.0, dir_th = 0.0;
    if (rows.electric && rows.thermal) {
      const double reg = 1e-12 * (h_ee + h_tt);
      const double a = h_ee + reg, t = h_tt + reg;
      const double det = a * t - h_et * h_et;
      dir_e = (t * short_e - h_et * short_th) / det;
      dir_th = (a * short_th - h_et * short_e) / det;
    } else if (rows.electric) {
      dir_e = short_e / h_ee;
    } else if (rows.thermal) {
      dir_th = short_th / h_tt;
    }
    const double slope = short_e * dir_e + short_th * dir_th;
    const double q0 = market.dual(le, lt);
    double te = steps.beta_lambda_e, tt = steps.beta_lambda_th;
    for (int ls = 0; ls < 60 && slope > 0.0; ++ls) {
      const double q = market.dual(le + te * dir_e, lt + tt * dir_th);
      if (q >= q0 + 1e-4 * std::min(te, tt) * slope) break;
      te *= 0.5;
      tt *= 0.5;
    }
    next.lambda_e[k] = le + te * dir_e;
    next.lambda_th[k] = lt + tt * dir_th;

    // Agents answer the posted prices.  Answering the previous prices instead
    // cycles without decay when every agent is linear.
    for (std::size_t i = 0; i < n; ++i) {
      const double best = market.respond(i, next.lambda_e[k], next.lambda_th[k]);
      next.y[i][k] = y_prev[i] + steps.beta_y * (best - y_prev[i]);
    }

    // Bound multipliers relax toward each agent's local KKT multiplier.
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ag = agents[i];
      const double y = next.y[i][k];
      const double excess = ag.d_e[k] * next.lambda_e[k] + ag.d_th[k] * next.lambda_th[k] -
                            ag.b[k] - ag.c[k] * y;
      const double mp = y >= ag.y_max[k] ? std::max(0.0, excess) : 0.0;
      const double mm = y <= ag.y_min[k] ? std::max(0.0, -excess) : 0.0;
      next.mu_plus[i][k] = s.mu_plus[i][k] + steps.beta_mu * (mp - s.mu_plus[i][k]);
      next.mu_minus[i][k] = s.mu_minus[i][k] + steps.beta_mu * (mm - s.mu_minus[i][k]);
    }
  }

  if (!all_finite(next))
    throw DivergenceError(fmt::format("negotiation iterate non-finite at k={}", next.iteration));
  return next;
}

DispatchResult negotiate(std::span<const DispatchableAgent> agents, const NetLoads& loads,
                         const StepSizes& steps, const std::optional<PriceDuple>& lambda_init) {
  check_inputs(agents, loads);
  steps.validate();
  return run_with_halving(agents, loads, steps,
                          NegotiationState::initial(agents, loads.size(), lambda_init));
}

DispatchResult negotiate_from(std::span<const DispatchableAgent> agents, const NetLoads& loads,
                              const StepSizes& steps, NegotiationState start) {
  check_inputs(agents, loads);
  steps.validate();
  const std::size_t m = loads.size();
  auto shape_ok = [&](const std::vector<std::vector<double>>& v) {
    return v.size() == agents.size() &&
           std::all_of(v.begin(), v.end(), [&](const auto& row) { return row.size() == m; });
  };
  if (!shape_ok(start.y) || !shape_ok(start.mu_plus) || !shape_ok(start.mu_minus) ||
      start.lambda_e.size() != m || start.lambda_th.size() != m)
    throw InvalidArgument("warm start does not match the agent set or horizon");
  start.iteration = 0;
  return run_with_halving(agents, loads, steps, start);
}

ForecastUpdate forecast_update(const DispatchResult& previous, NetLoads new_loads) {
  if (new_loads.size() != previous.lambda_e.size())
    throw InvalidArgument("forecast update: horizon length changed");
  ForecastUpdate u;
  u.loads = std::move(new_loads);
  u.lambda_init = previous.prices();
  u.warm_start = previous.state();
  return u;
}

bool KktReport::passes(double stationarity_tol, double balance_tol,
                       double complementarity_tol) const {
  return stationarity <= stationarity_tol && balance <= balance_tol &&
         complementarity <= complementarity_tol && bound_violation <= balance_tol &&
         multiplier_sign >= 0.0;
}

KktReport kkt_certificate(std::span<const DispatchableAgent> agents, const NetLoads& loads,
                          const DispatchResult& r) {
  check_inputs(agents, loads);
  const std::size_t m = loads.size();
  KktReport rep;
  const auto [ce, cth] = balance_residuals(agents, loads, r.y);

  for (std::size_t k = 0; k < m; ++k) {
    const double lam = std::max(std::abs(r.lambda_e[k]), std::abs(r.lambda_th[k]));
    double mag_e = std::abs(loads.interval_hours * loads.electric_kw[k]);
    double mag_th = std::abs(loads.interval_hours * loads.thermal_kw[k]);
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto& ag = agents[i];
      const double y = r.y[i][k];
      const double mp = r.mu_plus[i][k];
      const double mm = r.mu_minus[i][k];
      const double grad = ag.b[k] + ag.c[k] * y - ag.d_e[k] * r.lambda_e[k] -
                          ag.d_th[k] * r.lambda_th[k] + mp - mm;
      rep.stationarity = std::max(rep.stationarity, std::abs(grad) / (1.0 + lam));

      const double ybound = 1.0 + std::max(std::abs(ag.y_min[k]), std::abs(ag.y_max[k]));
      rep.complementarity =
          std::max({rep.complementarity, std::abs(mp * (ag.y_max[k] - y)) / ((1.0 + lam) * ybound),
                    std::abs(mm * (y - ag.y_min[k])) / ((1.0 + lam) * ybound)});
      rep.bound_violation = std::max(
          {rep.bound_violation, (y - ag.y_max[k]) / ybound, (ag.y_min[k] - y) / ybound});
      rep.multiplier_sign = std::min({rep.multiplier_sign, mp, mm});
      mag_e += std::abs(ag.d_e[k] * y);
      mag_th += std::abs(ag.d_th[k] * y);
    }
    rep.balance = std::max({rep.balance, std::abs(ce[k]) / (1.0 + mag_e),
                            std::abs(cth[k]) / (1.0 + mag_th)});
  }
  return rep;
}

}  // namespace rdmm::dispatch
