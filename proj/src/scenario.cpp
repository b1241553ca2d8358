#include "rdmm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "rdmm/errors.hpp"
#include "rdmm/units.hpp"

namespace rdmm {

// ---------------------------------------------------------------------------
// PriceSeries

void PriceSeries::validate() const {
  if (timestamps_s.empty()) throw InvalidArgument(fmt::format("price series '{}' is empty", acc_id));
  if (timestamps_s.size() != usd_per_mwh.size()) {
    throw InvalidArgument(fmt::format("price series '{}': {} timestamps but {} prices", acc_id,
                                      timestamps_s.size(), usd_per_mwh.size()));
  }
  for (std::size_t i = 0; i < timestamps_s.size(); ++i) {
    if (!std::isfinite(timestamps_s[i]) || !std::isfinite(usd_per_mwh[i])) {
      throw InvalidArgument(fmt::format("price series '{}': sample {} not finite", acc_id, i));
    }
    if (i > 0 && !(timestamps_s[i] > timestamps_s[i - 1])) {
      throw InvalidArgument(fmt::format(
          "price series '{}': timestamps not strictly increasing at sample {}", acc_id, i));
    }
  }
}

double PriceSeries::at(double t) const {
  auto it = std::upper_bound(timestamps_s.begin(), timestamps_s.end(), t);
  if (it == timestamps_s.begin()) return usd_per_mwh.front();
  return usd_per_mwh[static_cast<std::size_t>(it - timestamps_s.begin()) - 1];
}

double PriceSeries::mean(double t0, double t1) const {
  if (!(t1 > t0)) return at(t0);
  double sum = 0.0;
  double t = t0;
  while (t < t1) {
    auto it = std::upper_bound(timestamps_s.begin(), timestamps_s.end(), t);
    double next = it == timestamps_s.end() ? t1 : std::min(*it, t1);
    sum += at(t) * (next - t);
    t = next;
  }
  return sum / (t1 - t0);
}

double PriceSeries::coverage_end() const {
  const std::size_t n = timestamps_s.size();
  if (n < 2) return std::numeric_limits<double>::infinity();
  return timestamps_s[n - 1] + (timestamps_s[n - 1] - timestamps_s[n - 2]);
}

bool PriceSeries::covers(double t0, double t1) const {
  return !timestamps_s.empty() && timestamps_s.front() <= t0 && coverage_end() >= t1;
}

std::vector<double> interval_prices_usd_per_kwh(const PriceSeries& series, const HorizonGrid& grid) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(grid.size()));
  for (int k = 0; k < grid.size(); ++k) {
    out.push_back(units::usd_per_mwh_to_usd_per_kwh(series.mean(grid.begin_of(k), grid.end_of(k))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario

TripDefinition Scenario::trip(std::size_t train) const {
  const TrainRun& run = trains.at(train);
  return {run.train, run.timetable, run.grade, track, run.speed_limit};
}

const DispatchableAgent& Scenario::agent(const std::string& id) const {
  for (const auto& a : agents) {
    if (a.id == id) return a;
  }
  throw InvalidArgument(fmt::format("unknown agent '{}'", id));
}

const PassiveProfiles& Scenario::passive_profile(const std::string& id) const {
  for (const auto& p : passive) {
    if (p.id == id) return p;
  }
  throw InvalidArgument(fmt::format("unknown passive profile '{}'", id));
}

const PriceSeries* Scenario::price_series(const std::string& acc_id) const {
  for (const auto& p : prices) {
    if (p.acc_id == acc_id) return &p;
  }
  return nullptr;
}

namespace {

// Runs `check` and re-throws its InvalidArgument as a ScenarioError at `path`.
template <typename F>
void at_path(const std::string& path, F&& check) {
  try {
    check();
  } catch (const InvalidArgument& e) {
    throw ScenarioError(path, e.what());
  } catch (const OutOfRange& e) {
    throw ScenarioError(path, e.what());
  }
}

}  // namespace

void Scenario::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ScenarioError("schema_version", fmt::format("unsupported schema version {} (expected {})",
                                                      schema_version, kSchemaVersion));
  }
  const auto M = static_cast<std::size_t>(horizon.size());

  at_path("accs", [&] { validate_track(track); });
  std::set<std::string> acc_ids;
  for (std::size_t n = 0; n < track.size(); ++n) {
    if (!acc_ids.insert(track[n].id).second) {
      throw ScenarioError(fmt::format("accs[{}].id", n), fmt::format("duplicate ACC id '{}'", track[n].id));
    }
  }

  std::set<std::string> agent_ids;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto path = fmt::format("agents[{}]", i);
    if (!agent_ids.insert(agents[i].id).second) {
      throw ScenarioError(path + ".id", fmt::format("duplicate agent id '{}'", agents[i].id));
    }
    at_path(path, [&] { agents[i].validate(M); });
  }
  std::set<std::string> passive_ids;
  for (std::size_t i = 0; i < passive.size(); ++i) {
    const auto path = fmt::format("passive[{}]", i);
    if (!passive_ids.insert(passive[i].id).second) {
      throw ScenarioError(path + ".id", fmt::format("duplicate passive profile id '{}'", passive[i].id));
    }
    at_path(path, [&] { passive[i].validate(M); });
  }

  std::set<std::string> owned_agents;
  for (std::size_t n = 0; n < track.size(); ++n) {
    for (std::size_t i = 0; i < track[n].agent_ids.size(); ++i) {
      const auto& id = track[n].agent_ids[i];
      const auto path = fmt::format("accs[{}].agent_ids[{}]", n, i);
      if (!agent_ids.contains(id)) throw ScenarioError(path, fmt::format("unknown agent '{}'", id));
      if (!owned_agents.insert(id).second) {
        throw ScenarioError(path, fmt::format("agent '{}' belongs to more than one ACC", id));
      }
    }
    for (std::size_t i = 0; i < track[n].passive_profile_ids.size(); ++i) {
      const auto& id = track[n].passive_profile_ids[i];
      if (!passive_ids.contains(id)) {
        throw ScenarioError(fmt::format("accs[{}].passive_profile_ids[{}]", n, i),
                            fmt::format("unknown passive profile '{}'", id));
      }
    }
  }

  for (std::size_t p = 0; p < prices.size(); ++p) {
    const auto path = fmt::format("prices[{}]", p);
    if (!acc_ids.contains(prices[p].acc_id)) {
      throw ScenarioError(path + ".acc_id", fmt::format("unknown ACC '{}'", prices[p].acc_id));
    }
    if (price_series(prices[p].acc_id) != &prices[p]) {
      throw ScenarioError(path + ".acc_id", fmt::format("second price series for ACC '{}'", prices[p].acc_id));
    }
    at_path(path, [&] { prices[p].validate(); });
    if (!prices[p].covers(horizon.start(), horizon.end())) {
      throw ScenarioError(path, fmt::format("price series for ACC '{}' covers [{}, {}) but the horizon is [{}, {})",
                                            prices[p].acc_id, prices[p].timestamps_s.front(),
                                            prices[p].coverage_end(), horizon.start(), horizon.end()));
    }
  }
  // Network connections are priced from their ACC's series, and trains
  // bootstrap from every ACC's series.
  for (std::size_t n = 0; n < track.size(); ++n) {
    bool needs_series = !trains.empty();
    for (const auto& id : track[n].agent_ids) {
      if (agent(id).kind == AgentKind::kNetworkConnection) needs_series = true;
    }
    if (needs_series && price_series(track[n].id) == nullptr) {
      throw ScenarioError("prices", fmt::format("missing price series for ACC '{}'", track[n].id));
    }
  }

  for (std::size_t l = 0; l < trains.size(); ++l) {
    at_path(fmt::format("trains[{}]", l), [&] { trip(l).validate(); });
  }
  at_path("solver.dispatch", [&] { solver.dispatch.validate(); });
  at_path("solver.train", [&] { solver.train.validate(); });
  if (!(solver.damping > 0.0 && solver.damping <= 1.0)) {
    throw ScenarioError("solver.damping", fmt::format("damping {} outside (0, 1]", solver.damping));
  }
  if (!(solver.oscillation_damping > 0.0 && solver.oscillation_damping <= 1.0)) {
    throw ScenarioError("solver.oscillation_damping",
                        fmt::format("damping {} outside (0, 1]", solver.oscillation_damping));
  }
  if (solver.jobs < 0) throw ScenarioError("solver.jobs", "jobs must be >= 0");
}

std::vector<DispatchableAgent> acc_agents(const Scenario& scenario, std::size_t acc) {
  const AccDescriptor& descriptor = scenario.track.at(acc);
  std::vector<DispatchableAgent> out;
  for (const auto& id : descriptor.agent_ids) {
    DispatchableAgent agent = scenario.agent(id);
    if (agent.kind == AgentKind::kNetworkConnection) {
      const PriceSeries* series = scenario.price_series(descriptor.id);
      if (series == nullptr) {
        throw InvalidArgument(fmt::format("network agent '{}' has no price series", id));
      }
      agent.b = interval_prices_usd_per_kwh(*series, scenario.horizon);
    }
    out.push_back(std::move(agent));
  }
  return out;
}

dispatch::NetLoads acc_passive_loads(const Scenario& scenario, std::size_t acc, std::size_t j) {
  const auto M = static_cast<std::size_t>(scenario.horizon.size());
  dispatch::NetLoads loads{std::vector<double>(M, 0.0), std::vector<double>(M, 0.0),
                           scenario.horizon.interval_hours()};
  for (const auto& id : scenario.track.at(acc).passive_profile_ids) {
    const PassiveProfiles& p = scenario.passive_profile(id);
    auto re = p.renewable(j, M);
    auto el = p.electric(j, M);
    auto th = p.thermal(j, M);
    for (std::size_t k = 0; k < M; ++k) {
      loads.electric_kw[k] += re[k] + el[k];
      loads.thermal_kw[k] += th[k];
    }
  }
  return loads;
}

}  // namespace rdmm
