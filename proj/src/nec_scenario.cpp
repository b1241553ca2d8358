#include "rdmm/nec_scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "rdmm/errors.hpp"

namespace rdmm {

namespace {

constexpr double kHour = 3600.0;

// Morning demand shape: 85% overnight, full load from 09:00.
double morning(double t) { return 0.85 + 0.15 * std::clamp((t - 6.0 * kHour) / (3.0 * kHour), 0.0, 1.0); }

// Mid-January PV shape: sunrise 07:10, sunset 16:40.
double daylight(double t) {
  const double rise = 7.0 * kHour + 10.0 * 60.0;
  const double set = 16.0 * kHour + 40.0 * 60.0;
  if (t <= rise || t >= set) return 0.0;
  return std::sin(std::numbers::pi * (t - rise) / (set - rise));
}

std::vector<double> profile(const HorizonGrid& grid, double scale, double (*shape)(double)) {
  std::vector<double> out;
  for (int k = 0; k < grid.size(); ++k) {
    out.push_back(scale * shape(0.5 * (grid.begin_of(k) + grid.end_of(k))));
  }
  return out;
}

PassiveProfiles station_profiles(const std::string& id, const HorizonGrid& grid, double pv_peak_kw,
                                 double electric_kw, double thermal_kw) {
  PassiveProfiles p;
  p.id = id;
  p.renewable_kw = {profile(grid, pv_peak_kw, daylight)};
  p.electric_kw = {profile(grid, -electric_kw, morning)};
  if (thermal_kw > 0.0) p.thermal_kw = {profile(grid, -thermal_kw, morning)};
  return p;
}

}  // namespace

std::vector<std::string> nec_acc_ids() { return {"acc1", "acc2", "acc3", "acc4"}; }

std::vector<PriceSeries> synthetic_nec_prices() {
  // Base levels in $/MWh: Route 128 area, Providence, an import-constrained
  // eastern Connecticut zone, New Haven.
  const double base[] = {62.0, 38.0, 118.0, 52.0};
  std::vector<PriceSeries> out;
  const auto ids = nec_acc_ids();
  for (std::size_t n = 0; n < ids.size(); ++n) {
    PriceSeries s{ids[n], {}, {}};
    for (int i = 0; i < 288; ++i) {
      const double t = 300.0 * i;
      const double peak = std::exp(-std::pow((t - 7.75 * kHour) / kHour, 2.0));
      const double wiggle = 2.0 * std::sin(2.0 * std::numbers::pi * t / 1800.0 + static_cast<double>(n));
      s.timestamps_s.push_back(t);
      s.usd_per_mwh.push_back(std::round((base[n] * (1.0 + 0.25 * peak) + wiggle) * 100.0) / 100.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Scenario build_nec_scenario(const std::vector<PriceSeries>& prices, const NecOptions& o) {
  const auto ids = nec_acc_ids();
  if (o.acc_boundaries_m.size() != ids.size() + 1) {
    throw ScenarioError("accs", fmt::format("expected {} ACC boundaries", ids.size() + 1));
  }
  Scenario s;
  s.name = "nec-university-park-new-haven";
  s.horizon = HorizonGrid(o.horizon_start_s, o.intervals, o.interval_length_s);
  const auto M = static_cast<std::size_t>(o.intervals);
  const double h = s.horizon.interval_hours();

  for (std::size_t n = 0; n < ids.size(); ++n) {
    auto it = std::find_if(prices.begin(), prices.end(), [&](const PriceSeries& p) { return p.acc_id == ids[n]; });
    if (it == prices.end()) throw ScenarioError("prices", fmt::format("missing price series for ACC '{}'", ids[n]));
    s.prices.push_back(*it);
    s.track.push_back({ids[n], o.acc_boundaries_m[n], o.acc_boundaries_m[n + 1], {}, {}});
  }

  auto add = [&](std::size_t acc, const std::string& id, AgentKind kind, double de, double dth, double b,
                 double cap_kw, bool bidirectional) {
    s.agents.push_back(make_agent(id, kind, M, de, dth, 0.0, b, o.curvature, bidirectional ? -cap_kw * h : 0.0,
                                  cap_kw * h));
    s.track[acc].agent_ids.push_back(id);
  };
  // Network b is replaced by the ACC's price series at solve time.
  add(0, "H1", AgentKind::kHeating, 0.0, 1.0, 0.0303, 10'432.0, false);
  add(0, "C1", AgentKind::kCogeneration, 1.0, 1.02, 0.0629, 1'550.0, false);
  add(0, "N1", AgentKind::kNetworkConnection, 1.0, 0.0, 0.0, 10'000.0, true);
  add(1, "H2", AgentKind::kHeating, 0.0, 1.0, 0.0303, 20'864.0, false);
  add(1, "C2", AgentKind::kCogeneration, 1.0, 2.0, 0.0818, 4'560.0, false);
  add(1, "N2", AgentKind::kNetworkConnection, 1.0, 0.0, 0.0, 10'000.0, true);
  add(2, "N3", AgentKind::kNetworkConnection, 1.0, 0.0, 0.0, 10'000.0, true);
  add(3, "N4", AgentKind::kNetworkConnection, 1.0, 0.0, 0.0, 10'000.0, true);

  // Station buildings with rooftop and parking-lot PV.  ACC4 has no thermal
  // asset, so its station heat is not modeled.
  s.passive.push_back(station_profiles("university-park", s.horizon, 800.0, 1'200.0, 2'500.0));
  s.passive.push_back(station_profiles("providence", s.horizon, 1'000.0, 2'500.0, 6'000.0));
  s.passive.push_back(station_profiles("new-haven", s.horizon, 900.0, 2'000.0, 0.0));
  s.track[0].passive_profile_ids = {"university-park"};
  s.track[1].passive_profile_ids = {"providence"};
  s.track[3].passive_profile_ids = {"new-haven"};

  if (o.with_train) {
    TrainRun run;
    run.train = acela_train_spec();
    run.train.id = "acela-2155";
    run.timetable.stations = {
        {"University Park", 0.0, o.departure_s, o.departure_s, 0.0},
        {"Providence", o.providence_m, o.providence_arrival_s, o.providence_arrival_s + o.providence_dwell_s,
         o.providence_dwell_s},
        {"New Haven", o.new_haven_m, o.new_haven_arrival_s, o.new_haven_arrival_s, 0.0},
    };
    run.speed_limit = SpeedLimitProfile::constant(run.train.v_max);
    s.trains.push_back(std::move(run));
  }
  s.validate();
  return s;
}

}  // namespace rdmm
