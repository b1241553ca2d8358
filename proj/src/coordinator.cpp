#include "rdmm/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "rdmm/errors.hpp"
#include "rdmm/log.hpp"
#include "rdmm/parallel.hpp"
#include "rdmm/units.hpp"

namespace rdmm {

std::vector<std::vector<double>> aggregate_traction(std::span<const Trajectory> trajectories,
                                                    const HorizonGrid& grid,
                                                    std::span<const AccDescriptor> track) {
  const auto M = static_cast<std::size_t>(grid.size());
  std::vector<std::vector<double>> kw(track.size(), std::vector<double>(M, 0.0));
  for (const auto& traj : trajectories) {
    auto energy = interval_energy(traj, track, grid);
    for (std::size_t n = 0; n < track.size(); ++n) {
      for (std::size_t k = 0; k < M; ++k) {
        kw[n][k] -= units::watts_to_kw(energy[n][k] / grid.interval_length());
      }
    }
  }
  return kw;
}

PriceFunction compose_train_prices(const std::vector<std::vector<double>>& lambda_e_usd_per_kwh,
                                   const HorizonGrid& grid) {
  auto table = lambda_e_usd_per_kwh;
  for (auto& row : table) {
    for (double& p : row) p = units::usd_per_kwh_to_usd_per_joule(p);
  }
  return PriceFunction(grid, std::move(table));
}

std::vector<std::vector<double>> bootstrap_prices(const Scenario& scenario) {
  std::vector<std::vector<double>> out;
  for (const auto& acc : scenario.track) {
    const PriceSeries* series = scenario.price_series(acc.id);
    if (series == nullptr) {
      out.emplace_back(static_cast<std::size_t>(scenario.horizon.size()), 0.0);
    } else {
      out.push_back(interval_prices_usd_per_kwh(*series, scenario.horizon));
    }
  }
  return out;
}

double Settlement::payment_imbalance() const {
  double worst = 0.0;
  for (std::size_t n = 0; n < acc_ids.size(); ++n) {
    for (int k = 0; k < horizon.size(); ++k) {
      double paid = passive_payment_usd[n][k];
      for (const auto& t : trains) paid += t.payment_usd[n][k];
      double earned = 0.0;
      for (const auto& a : agents) {
        if (a.acc == n) earned += a.revenue_usd[k];
      }
      worst = std::max(worst, std::abs(paid - earned));
    }
  }
  return worst;
}

double Settlement::total_train_cost() const {
  double sum = 0.0;
  for (const auto& t : trains) sum += t.trip_cost_usd;
  return sum;
}

namespace {

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

// Relative inf-norm distance between the equilibrium prices of two iterates.
double price_distance(const ForecastIterate& a, const ForecastIterate& b) {
  double scale = 1e-9;
  double diff = 0.0;
  for (std::size_t n = 0; n < a.dispatch.size(); ++n) {
    const auto& x = a.dispatch[n];
    const auto& y = b.dispatch[n];
    scale = std::max({scale, max_abs(y.lambda_e), max_abs(y.lambda_th)});
    diff = std::max({diff, max_abs_diff(x.lambda_e, y.lambda_e), max_abs_diff(x.lambda_th, y.lambda_th)});
  }
  return diff / scale;
}

// Relative inf-norm distance between setpoints, per agent.
double setpoint_distance(const ForecastIterate& a, const ForecastIterate& b) {
  double worst = 0.0;
  for (std::size_t n = 0; n < a.dispatch.size(); ++n) {
    for (std::size_t i = 0; i < a.dispatch[n].y.size(); ++i) {
      const auto& ya = a.dispatch[n].y[i];
      const auto& yb = b.dispatch[n].y[i];
      worst = std::max(worst, max_abs_diff(ya, yb) / std::max(1.0, max_abs(yb)));
    }
  }
  return worst;
}

double priced_trip_cost(const std::vector<Trajectory>& trajectories, std::span<const AccDescriptor> track,
                        const PriceFunction& prices) {
  double sum = 0.0;
  for (auto traj : trajectories) {
    price_trajectory(traj, track, prices);
    sum += traj.cost_usd;
  }
  return sum;
}

std::vector<std::vector<double>> equilibrium_electric(const ForecastIterate& it) {
  std::vector<std::vector<double>> out;
  for (const auto& d : it.dispatch) out.push_back(d.lambda_e);
  return out;
}

std::size_t passive_instances(const Scenario& scenario) {
  std::size_t n = 1;
  for (const auto& p : scenario.passive) {
    n = std::max({n, p.renewable_kw.size(), p.electric_kw.size(), p.thermal_kw.size()});
  }
  return n;
}

}  // namespace

Settlement settle(const Scenario& scenario, const ForecastIterate& iterate, bool converged) {
  const HorizonGrid& grid = scenario.horizon;
  const auto M = static_cast<std::size_t>(grid.size());
  const double h = grid.interval_hours();
  const std::size_t N = scenario.track.size();

  Settlement s;
  s.horizon = grid;
  s.converged = converged;
  s.iterations = iterate.j;
  s.traction_kw = iterate.traction_kw;
  for (std::size_t n = 0; n < N; ++n) {
    const auto& result = iterate.dispatch.at(n);
    s.acc_ids.push_back(scenario.track[n].id);
    s.prices.push_back(result.prices());
    s.market_converged.push_back(result.converged);

    auto agents = acc_agents(scenario, n);
    for (std::size_t i = 0; i < agents.size(); ++i) {
      AgentSettlement a{agents[i].id, n, result.y[i], std::vector<double>(M, 0.0)};
      for (std::size_t k = 0; k < M; ++k) {
        a.revenue_usd[k] = (result.lambda_e[k] * agents[i].d_e[k] + result.lambda_th[k] * agents[i].d_th[k]) *
                           result.y[i][k];
      }
      s.agents.push_back(std::move(a));
    }

    auto passive = acc_passive_loads(scenario, n, static_cast<std::size_t>(iterate.j - 1));
    std::vector<double> pay(M);
    for (std::size_t k = 0; k < M; ++k) {
      pay[k] = -h * (result.lambda_e[k] * passive.electric_kw[k] + result.lambda_th[k] * passive.thermal_kw[k]);
    }
    s.passive_electric_kw.push_back(std::move(passive.electric_kw));
    s.passive_thermal_kw.push_back(std::move(passive.thermal_kw));
    s.passive_payment_usd.push_back(std::move(pay));
  }

  auto prices = compose_train_prices(equilibrium_electric(iterate), grid);
  for (auto traj : iterate.trajectories) {
    price_trajectory(traj, scenario.track, prices);
    TrainSettlement t{traj.train_id, traj.cost_usd, traj.energy_j, traj.work_j, {}};
    auto energy = interval_energy(traj, scenario.track, grid);
    for (std::size_t n = 0; n < N; ++n) {
      std::vector<double> pay(M);
      for (std::size_t k = 0; k < M; ++k) {
        pay[k] = iterate.dispatch[n].lambda_e[k] * units::joules_to_kwh(energy[n][k]);
      }
      t.payment_usd.push_back(std::move(pay));
    }
    s.trains.push_back(std::move(t));
  }
  return s;
}

RdmmResult run_rdmm(const Scenario& scenario, const IterateObserver& observer) {
  scenario.validate();
  const HorizonGrid& grid = scenario.horizon;
  const auto M = static_cast<std::size_t>(grid.size());
  const std::size_t N = scenario.track.size();
  const std::size_t L = scenario.trains.size();
  const auto& steps = scenario.solver.dispatch;
  const int jobs = resolve_jobs(scenario.solver.jobs);

  TrainSolverConfig train_config = scenario.solver.train;
  train_config.seed = scenario.seed;
  train_config.parallel_legs = train_config.parallel_legs && jobs > 1 && L < static_cast<std::size_t>(jobs);

  std::vector<std::vector<DispatchableAgent>> agents(N);
  for (std::size_t n = 0; n < N; ++n) agents[n] = acc_agents(scenario, n);
  std::vector<TripDefinition> trips;
  for (std::size_t l = 0; l < L; ++l) trips.push_back(scenario.trip(l));

  const std::size_t instances = passive_instances(scenario);
  auto train_prices = bootstrap_prices(scenario);
  double rho = scenario.solver.damping;

  RdmmResult out;
  bool converged = false;
  for (int j = 1; j <= steps.j_max; ++j) {
    const ForecastIterate* prev = out.log.empty() ? nullptr : &out.log.back();
    ForecastIterate it;
    it.j = j;
    it.train_prices = train_prices;

    const auto prices = compose_train_prices(train_prices, grid);
    it.trajectories.resize(L);
    parallel_for(L, jobs, [&](std::size_t l) {
      const Trajectory* warm = prev != nullptr ? &prev->trajectories[l] : nullptr;
      it.trajectories[l] = optimize_trip(trips[l], prices, train_config, warm);
    });
    it.traction_kw = aggregate_traction(it.trajectories, grid, scenario.track);

    it.dispatch.resize(N);
    parallel_for(N, jobs, [&](std::size_t n) {
      auto loads = acc_passive_loads(scenario, n, static_cast<std::size_t>(j - 1));
      for (std::size_t k = 0; k < M; ++k) loads.electric_kw[k] += it.traction_kw[n][k];
      if (prev != nullptr) {
        it.dispatch[n] = dispatch::negotiate_from(agents[n], loads, steps, prev->dispatch[n].state());
      } else {
        dispatch::PriceDuple init{train_prices[n], std::vector<double>(M, 0.0)};
        it.dispatch[n] = dispatch::negotiate(agents[n], loads, steps, init);
      }
    });
    for (std::size_t n = 0; n < N; ++n) {
      if (!it.dispatch[n].converged) {
        log::warn("forecast iteration {}: market '{}' did not converge in {} rounds", j,
                  scenario.track[n].id, it.dispatch[n].iterations);
      }
    }

    it.train_cost_usd =
        priced_trip_cost(it.trajectories, scenario.track, compose_train_prices(equilibrium_electric(it), grid));
    if (prev != nullptr) {
      it.delta_y = setpoint_distance(it, *prev);
      it.delta_lambda = price_distance(it, *prev);
    } else {
      it.delta_y = it.delta_lambda = std::numeric_limits<double>::infinity();
    }
    if (out.log.size() >= 2) {
      const auto& before = out.log[out.log.size() - 2];
      double d1 = it.delta_lambda;
      it.oscillation = d1 > steps.tol_j_lambda && price_distance(it, before) < 0.5 * d1;
      it.cost_increase = it.train_cost_usd > prev->train_cost_usd + 1e-9 * std::abs(prev->train_cost_usd) + 1e-9;
      if (it.cost_increase) {
        log::info("forecast iteration {}: train cost rose from {:.6f} to {:.6f} $", j, prev->train_cost_usd,
                  it.train_cost_usd);
      }
      if ((it.oscillation || it.cost_increase) && rho > scenario.solver.oscillation_damping) {
        rho = scenario.solver.oscillation_damping;
        log::info("forecast iteration {}: {} detected, price damping {} engaged", j,
                  it.oscillation ? "period-2 price cycle" : "train cost increase", rho);
      }
    }
    it.damping = rho;

    bool uncoupled = L == 0 && static_cast<std::size_t>(j) >= instances;
    converged = uncoupled || (prev != nullptr && it.delta_y <= steps.tol_j_y && it.delta_lambda <= steps.tol_j_lambda);
    log::info("forecast iteration {}: |dy| {:.3e} |dlambda| {:.3e} train cost {:.4f} $", j, it.delta_y,
              it.delta_lambda, it.train_cost_usd);

    auto equilibrium = equilibrium_electric(it);
    out.log.push_back(std::move(it));
    if (observer) observer(out.log.back());
    if (converged) break;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < M; ++k) {
        train_prices[n][k] = (1.0 - rho) * train_prices[n][k] + rho * equilibrium[n][k];
      }
    }
  }

  std::size_t chosen = out.log.size() - 1;
  if (!converged) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < out.log.size(); ++i) {
      const auto& it = out.log[i];
      double score = std::max(it.delta_y / steps.tol_j_y, it.delta_lambda / steps.tol_j_lambda);
      if (score < best) {
        best = score;
        chosen = i;
      }
    }
    log::warn("forecast loop stopped after {} iterations without convergence; settling iterate {}",
              out.log.size(), out.log[chosen].j);
  }
  out.settled_iterate = chosen;
  out.trajectories = out.log[chosen].trajectories;
  out.settlement = settle(scenario, out.log[chosen], converged);
  return out;
}

namespace {

void shift_left(std::vector<double>& v) {
  if (v.size() < 2) return;
  std::rotate(v.begin(), v.begin() + 1, v.end());
  v.back() = v[v.size() - 2];
}

}  // namespace

RollingAdvance rolling_advance(const Scenario& scenario, const RollingInputs& inputs) {
  RollingAdvance out{scenario, {}};
  Scenario& s = out.scenario;
  s.horizon = scenario.horizon.advanced(1);

  for (auto& a : s.agents) {
    for (auto* v : {&a.d_e, &a.d_th, &a.a, &a.b, &a.c, &a.y_min, &a.y_max}) shift_left(*v);
  }
  for (auto& p : s.passive) {
    auto replacement = std::find_if(inputs.passive.begin(), inputs.passive.end(),
                                    [&](const PassiveProfiles& q) { return q.id == p.id; });
    if (replacement != inputs.passive.end()) {
      p = *replacement;
      continue;
    }
    for (auto* series : {&p.renewable_kw, &p.electric_kw, &p.thermal_kw}) {
      for (auto& profile : *series) shift_left(profile);
    }
  }
  for (const auto& q : inputs.passive) {
    if (std::none_of(s.passive.begin(), s.passive.end(), [&](const PassiveProfiles& p) { return p.id == q.id; })) {
      throw InvalidArgument(fmt::format("rolling update for unknown passive profile '{}'", q.id));
    }
  }
  for (const auto& q : inputs.prices) {
    auto it = std::find_if(s.prices.begin(), s.prices.end(),
                           [&](const PriceSeries& p) { return p.acc_id == q.acc_id; });
    if (it == s.prices.end()) throw InvalidArgument(fmt::format("rolling update for unknown ACC '{}'", q.acc_id));
    *it = q;
  }
  for (auto& p : s.prices) {
    if (p.covers(s.horizon.start(), s.horizon.end())) continue;
    out.warnings.push_back(fmt::format("price series for ACC '{}' ends at {} s, before the horizon end {} s; "
                                       "holding the last price",
                                       p.acc_id, p.coverage_end(), s.horizon.end()));
    log::warn("{}", out.warnings.back());
    while (p.coverage_end() < s.horizon.end()) {
      p.timestamps_s.push_back(p.coverage_end());
      p.usd_per_mwh.push_back(p.usd_per_mwh.back());
    }
  }
  s.validate();
  return out;
}

}  // namespace rdmm
