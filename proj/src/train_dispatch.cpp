#include "rdmm/train_dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>

#include <fmt/format.h>

#include "rdmm/errors.hpp"
#include "rdmm/leg_nlp.hpp"
#include "rdmm/log.hpp"

namespace rdmm {

// ---------------------------------------------------------------------------
// Trip definition

double TripDefinition::departure_s() const {
  if (timetable.stations.empty()) throw InvalidArgument("trip has no stations");
  return timetable.stations.front().latest_departure_s;
}

double TripDefinition::arrival_s() const {
  if (timetable.stations.empty()) throw InvalidArgument("trip has no stations");
  return timetable.stations.back().earliest_arrival_s;
}

void TripDefinition::validate() const {
  train.validate();
  timetable.validate();
  validate_track(track);
  grade.validate();
  if (!(departure_s() < arrival_s())) throw InvalidArgument("trip departs after it arrives");
  for (const auto& st : timetable.stations) {
    if (st.x_m < track.front().start_m || st.x_m > track.back().end_m) {
      throw InvalidArgument(fmt::format("station '{}' at {} m is off the track", st.name, st.x_m));
    }
  }
}

std::vector<LegSchedule> leg_schedule(const TripDefinition& trip) {
  const auto& st = trip.timetable.stations;
  std::vector<LegSchedule> legs;
  for (std::size_t s = 0; s + 1 < st.size(); ++s) {
    legs.push_back({s, st[s].name, st[s + 1].name, st[s].x_m, st[s + 1].x_m,
                    st[s].latest_departure_s, st[s + 1].earliest_arrival_s});
  }
  return legs;
}

// ---------------------------------------------------------------------------
// Prices

PriceFunction::PriceFunction(HorizonGrid grid, std::vector<std::vector<double>> usd_per_joule)
    : grid_(grid), prices_(std::move(usd_per_joule)) {
  if (prices_.empty()) throw InvalidArgument("price function needs at least one ACC");
  for (std::size_t n = 0; n < prices_.size(); ++n) {
    if (prices_[n].size() != static_cast<std::size_t>(grid_.size())) {
      throw InvalidArgument(fmt::format("price profile of ACC {} has {} entries, expected {}", n,
                                        prices_[n].size(), grid_.size()));
    }
    for (double p : prices_[n])
      if (!std::isfinite(p)) throw InvalidArgument(fmt::format("non-finite price for ACC {}", n));
  }
}

PriceFunction PriceFunction::uniform(double usd_per_joule, std::size_t accs) {
  return PriceFunction(HorizonGrid(0.0, 1, 1.0),
                       std::vector<std::vector<double>>(accs, std::vector<double>{usd_per_joule}));
}

double PriceFunction::at(double t, std::size_t acc) const {
  if (acc >= prices_.size()) throw OutOfRange(fmt::format("no prices for ACC {}", acc));
  const auto k = static_cast<long>(std::floor((t - grid_.start()) / grid_.interval_length()));
  const long last = grid_.size() - 1;
  return prices_[acc][static_cast<std::size_t>(std::clamp(k, 0L, last))];
}

std::vector<double> PriceFunction::breaks(double t0, double t1) const {
  std::vector<double> out;
  for (int k = 1; k < grid_.size(); ++k) {
    const double b = grid_.begin_of(k);
    if (b > t0 && b < t1) out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step geometry and pricing

std::vector<StepPiece> split_step(std::span<const AccDescriptor> track, double t0, double dt,
                                  double x0, double v0, double a, std::span<const double> time_breaks) {
  auto position = [&](double s) { return x0 + v0 * s + 0.5 * a * s * s; };
  std::vector<double> cuts{0.0, dt};
  const double x_end = position(dt);
  for (std::size_t b = 0; b + 1 < track.size(); ++b) {
    const double xb = track[b].end_m;
    if (!(xb > x0 && xb < x_end)) continue;
    const double d = xb - x0;
    const double denom = v0 + std::sqrt(std::max(0.0, v0 * v0 + 2.0 * a * d));
    if (denom > 0.0) cuts.push_back(std::clamp(2.0 * d / denom, 0.0, dt));
  }
  for (double tb : time_breaks)
    if (tb > t0 && tb < t0 + dt) cuts.push_back(tb - t0);
  std::sort(cuts.begin(), cuts.end());

  const double lo = track.front().start_m, hi = track.back().end_m;
  std::vector<StepPiece> pieces;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (!(cuts[i + 1] > cuts[i])) continue;
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    const std::size_t acc = acc_of_position(track, std::clamp(position(mid), lo, hi));
    pieces.push_back({acc, t0 + cuts[i], t0 + cuts[i + 1]});
  }
  return pieces;
}

namespace {

double pieces_cost(const std::vector<StepPiece>& pieces, double power_w, const PriceFunction& prices) {
  double cost = 0.0;
  for (const auto& p : pieces) cost += power_w * prices.at(0.5 * (p.t0_s + p.t1_s), p.acc) * (p.t1_s - p.t0_s);
  return cost;
}

void refresh_totals(Trajectory& traj) {
  traj.cost_usd = traj.work_j = traj.energy_j = 0.0;
  for (const auto& s : traj.steps) {
    traj.cost_usd += s.cost_usd;
    traj.energy_j += s.energy_j();
    traj.work_j += std::max(s.power_w, 0.0) * s.dt_s;
  }
}

void refresh_nodes(Trajectory& traj) {
  traj.nodes.clear();
  for (const auto& s : traj.steps) traj.nodes.push_back({s.t0_s, s.x0_m, s.v0_mps, s.accel()});
  if (!traj.steps.empty()) {
    const auto& s = traj.steps.back();
    traj.nodes.push_back({s.t0_s + s.dt_s, s.x1_m, s.v1_mps, 0.0});
  }
}

// Position inside a step is quadratic for optimized trajectories and linear
// for resampled traces.
void refresh_occupancy(Trajectory& traj, std::span<const AccDescriptor> track, bool linear) {
  traj.occupancy.clear();
  for (const auto& s : traj.steps) {
    const double v0 = linear ? (s.x1_m - s.x0_m) / s.dt_s : s.v0_mps;
    const double a = linear ? 0.0 : s.accel();
    for (const auto& p : split_step(track, s.t0_s, s.dt_s, s.x0_m, v0, a, {})) {
      if (!traj.occupancy.empty() && traj.occupancy.back().acc == p.acc) {
        traj.occupancy.back().t_exit_s = p.t1_s;
      } else {
        traj.occupancy.push_back({p.acc, p.t0_s, p.t1_s});
      }
    }
  }
}

void append_dwell(std::vector<TrajectoryStep>& steps, double t0, double t1, double x, double dt) {
  const double duration = t1 - t0;
  if (!(duration > 0.0)) return;
  const int n = std::max(1, static_cast<int>(std::ceil(duration / dt - 1e-9)));
  const double h = duration / n;
  for (int k = 0; k < n; ++k) {
    TrajectoryStep s;
    s.t0_s = t0 + k * h;
    s.dt_s = h;
    s.x0_m = s.x1_m = x;
    steps.push_back(s);
  }
}

}  // namespace

double step_cost(const TrajectoryStep& step, std::span<const AccDescriptor> track,
                 const PriceFunction& prices) {
  if (step.power_w == 0.0) return 0.0;
  const auto br = prices.breaks(step.t0_s, step.t0_s + step.dt_s);
  return pieces_cost(split_step(track, step.t0_s, step.dt_s, step.x0_m, step.v0_mps, step.accel(), br),
                     step.power_w, prices);
}

void price_trajectory(Trajectory& traj, std::span<const AccDescriptor> track,
                      const PriceFunction& prices) {
  for (auto& s : traj.steps) s.cost_usd = step_cost(s, track, prices);
  refresh_totals(traj);
}

std::vector<std::vector<double>> interval_energy(const Trajectory& traj,
                                                 std::span<const AccDescriptor> track,
                                                 const HorizonGrid& grid) {
  std::vector<std::vector<double>> e(track.size(), std::vector<double>(grid.size(), 0.0));
  std::vector<double> br;
  for (int k = 0; k <= grid.size(); ++k) br.push_back(grid.begin_of(0) + k * grid.interval_length());
  for (const auto& s : traj.steps) {
    if (s.power_w == 0.0) continue;
    if (s.x0_m < track.front().start_m - 1e-6 || s.x1_m > track.back().end_m + 1e-6) {
      throw InvalidArgument(fmt::format("trajectory of '{}' leaves the track at t={}", traj.train_id,
                                        s.t0_s));
    }
    for (const auto& p : split_step(track, s.t0_s, s.dt_s, s.x0_m, s.v0_mps, s.accel(), br)) {
      if (auto k = grid.find_interval(0.5 * (p.t0_s + p.t1_s))) e[p.acc][*k] += s.power_w * (p.t1_s - p.t0_s);
    }
  }
  return e;
}

std::vector<double> Trajectory::traction_profile() const {
  std::vector<double> f;
  f.reserve(steps.size());
  for (const auto& s : steps) f.push_back(s.traction_n);
  return f;
}

void TrainSolverConfig::validate() const {
  if (!(dt_s > 0.0)) throw InvalidArgument("train solver: time step must be positive");
  if (multi_starts < 1) throw InvalidArgument("train solver: need at least one start");
  if (!(price_smoothing_m > 0.0)) throw InvalidArgument("train solver: smoothing must be positive");
}

// ---------------------------------------------------------------------------
// Trip optimization

Trajectory optimize_trip(const TripDefinition& trip, const PriceFunction& prices,
                         const TrainSolverConfig& config, const Trajectory* warm) {
  trip.validate();
  config.validate();
  if (prices.accs() < trip.track.size()) throw InvalidArgument("prices missing for some ACCs");
  const auto legs = leg_schedule(trip);

  std::vector<LegNlp> nlps;
  for (const auto& leg : legs) nlps.push_back(transcribe_leg(trip, leg, prices, config.dt_s, config.price_smoothing_m));

  std::vector<std::optional<Eigen::VectorXd>> warm_z(legs.size());
  if (warm && warm->leg_first_step.size() == legs.size()) {
    for (std::size_t l = 0; l < legs.size(); ++l) {
      const std::size_t first = warm->leg_first_step[l];
      const auto n = static_cast<std::size_t>(nlps[l].steps());
      if (first + n > warm->steps.size() || std::abs(warm->steps[first].t0_s - legs[l].t0_s) > 1e-6)
        continue;
      std::vector<double> x, v;
      for (std::size_t k = 0; k < n; ++k) {
        x.push_back(warm->steps[first + k].x0_m);
        v.push_back(warm->steps[first + k].v0_mps);
      }
      x.push_back(warm->steps[first + n - 1].x1_m);
      v.push_back(warm->steps[first + n - 1].v1_mps);
      warm_z[l] = nlps[l].pack(x, v);
    }
  }

  auto solve_leg = [&](std::size_t l) {
    return optimize_leg(nlps[l], config, warm_z[l] ? &*warm_z[l] : nullptr);
  };
  std::vector<LegSolution> sols;
  if (config.parallel_legs && legs.size() > 1) {
    std::vector<std::future<LegSolution>> fut;
    for (std::size_t l = 0; l < legs.size(); ++l) fut.push_back(std::async(std::launch::async, solve_leg, l));
    for (auto& f : fut) sols.push_back(f.get());
  } else {
    for (std::size_t l = 0; l < legs.size(); ++l) sols.push_back(solve_leg(l));
  }

  Trajectory traj;
  traj.train_id = trip.train.id;
  for (std::size_t l = 0; l < legs.size(); ++l) {
    if (l > 0) append_dwell(traj.steps, legs[l - 1].t1_s, legs[l].t0_s, legs[l].x0_m, config.dt_s);
    traj.leg_first_step.push_back(traj.steps.size());
    const auto st = leg_steps(nlps[l], sols[l].x, sols[l].v);
    traj.steps.insert(traj.steps.end(), st.begin(), st.end());
  }
  refresh_nodes(traj);
  refresh_totals(traj);
  refresh_occupancy(traj, trip.track, false);
  return traj;
}

Trajectory min_work_profile(const TripDefinition& trip, const TrainSolverConfig& config) {
  return optimize_trip(trip, PriceFunction::uniform(1.0, trip.track.size()), config);
}

Trajectory evaluate_profile_cost(std::span<const KinematicSample> trace, const TripDefinition& trip,
                                 const PriceFunction& prices, double dt_s) {
  if (trace.size() < 2) throw InvalidArgument("trace needs at least two samples");
  if (!(dt_s > 0.0)) throw InvalidArgument("trace resampling step must be positive");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (!(trace[i].t > trace[i - 1].t)) {
      throw InvalidArgument(fmt::format("trace time not strictly increasing at sample {}", i));
    }
  }
  validate_track(trip.track);
  const double t0 = trace.front().t, span = trace.back().t - t0;
  const int n = std::max(1, static_cast<int>(std::lround(span / dt_s)));
  const double h = span / n;

  std::vector<double> xs(n + 1), vs(n + 1);
  std::size_t j = 0;
  for (int k = 0; k <= n; ++k) {
    const double t = k == n ? trace.back().t : t0 + k * h;
    while (j + 2 < trace.size() && trace[j + 1].t < t) ++j;
    const auto& p = trace[j];
    const auto& q = trace[j + 1];
    const double w = std::clamp((t - p.t) / (q.t - p.t), 0.0, 1.0);
    xs[k] = p.x + w * (q.x - p.x);
    vs[k] = std::max(0.0, p.v + w * (q.v - p.v));
  }

  Trajectory traj;
  traj.train_id = trip.train.id;
  traj.leg_first_step.push_back(0);
  for (int k = 0; k < n; ++k) {
    TrajectoryStep s;
    s.t0_s = t0 + k * h;
    s.dt_s = h;
    s.x0_m = xs[k];
    s.x1_m = xs[k + 1];
    s.v0_mps = vs[k];
    s.v1_mps = vs[k + 1];
    const KinematicSample mid{s.t0_s, 0.5 * (s.x0_m + s.x1_m), 0.5 * (s.v0_mps + s.v1_mps), s.accel()};
    const ForceBreakdown f = power_from_kinematics(trip.train, trip.grade, mid, true);
    if (!f.within_limits) ++traj.clipped_steps;
    s.traction_n = f.traction_n;
    s.resistance_n = f.resistance_n;
    s.grade_n = f.grade_n;
    s.power_w = f.power_w;
    if (s.power_w != 0.0) {
      const auto br = prices.breaks(s.t0_s, s.t0_s + h);
      s.cost_usd = pieces_cost(split_step(trip.track, s.t0_s, h, s.x0_m, (s.x1_m - s.x0_m) / h, 0.0, br),
                               s.power_w, prices);
    }
    traj.steps.push_back(s);
  }
  if (traj.clipped_steps > 0)
    log::info("trace evaluation: {} of {} steps clipped to the traction envelope", traj.clipped_steps, n);
  refresh_nodes(traj);
  refresh_totals(traj);
  refresh_occupancy(traj, trip.track, true);
  return traj;
}

}  // namespace rdmm
