#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rdmm/core.hpp"
#include "rdmm/interior_point.hpp"
#include "rdmm/train_dynamics.hpp"

namespace rdmm {

/// One train's run over a fixed timetable.  Speed limits default to the
/// consist's v_max when `speed_limit.upper` is empty.
struct TripDefinition {
  TrainSpec train;
  Timetable timetable;
  GradeProfile grade;
  std::vector<AccDescriptor> track;
  SpeedLimitProfile speed_limit;

  double departure_s() const;  // latest departure of the first station
  double arrival_s() const;    // earliest arrival at the last station
  void validate() const;

  bool operator==(const TripDefinition&) const = default;
};

/// Inter-station run with fixed end times: depart at the station's latest
/// departure, arrive at the next station's earliest arrival.
struct LegSchedule {
  std::size_t index = 0;
  std::string from, to;
  double x0_m = 0.0, x1_m = 0.0;
  double t0_s = 0.0, t1_s = 0.0;
};

std::vector<LegSchedule> leg_schedule(const TripDefinition& trip);

/// Piecewise-constant energy price in $/J per ACC and dispatch interval.
/// Outside the grid the first or last interval's price is held.
class PriceFunction {
 public:
  PriceFunction(HorizonGrid grid, std::vector<std::vector<double>> usd_per_joule);
  static PriceFunction uniform(double usd_per_joule, std::size_t accs);

  double at(double t, std::size_t acc) const;
  std::size_t accs() const noexcept { return prices_.size(); }
  const HorizonGrid& grid() const noexcept { return grid_; }
  const std::vector<std::vector<double>>& table() const noexcept { return prices_; }
  /// Interval boundaries strictly inside (t0, t1).
  std::vector<double> breaks(double t0, double t1) const;

 private:
  HorizonGrid grid_;
  std::vector<std::vector<double>> prices_;
};

/// One integration step of a trajectory.  Power is constant over the step.
struct TrajectoryStep {
  double t0_s = 0.0;
  double dt_s = 0.0;
  double x0_m = 0.0, x1_m = 0.0;
  double v0_mps = 0.0, v1_mps = 0.0;
  double traction_n = 0.0;
  double resistance_n = 0.0;
  double grade_n = 0.0;
  double power_w = 0.0;  // electrical, signed
  double cost_usd = 0.0;

  double accel() const { return (v1_mps - v0_mps) / dt_s; }
  double energy_j() const { return power_w * dt_s; }
};

/// Time span during which the train is inside one ACC.
struct AccSpan {
  std::size_t acc = 0;
  double t_enter_s = 0.0;
  double t_exit_s = 0.0;
};

struct Trajectory {
  std::string train_id;
  std::vector<KinematicSample> nodes;  // one more than steps
  std::vector<TrajectoryStep> steps;
  std::vector<std::size_t> leg_first_step;
  std::vector<AccSpan> occupancy;
  double cost_usd = 0.0;
  double work_j = 0.0;    // integral of max(P, 0)
  double energy_j = 0.0;  // signed integral of P
  std::size_t clipped_steps = 0;

  double start_s() const { return nodes.empty() ? 0.0 : nodes.front().t; }
  double end_s() const { return nodes.empty() ? 0.0 : nodes.back().t; }
  /// Traction force per step, for work-energy audits.
  std::vector<double> traction_profile() const;
};

struct TrainSolverConfig {
  double dt_s = 5.0;
  int multi_starts = 3;
  std::uint64_t seed = 1;
  double price_smoothing_m = 250.0;  // logistic width at ACC boundaries
  bool parallel_legs = true;
  nlp::Options nlp{};

  void validate() const;
  bool operator==(const TrainSolverConfig&) const = default;
};

/// A sub-span of a step lying in one ACC and one price interval.
struct StepPiece {
  std::size_t acc = 0;
  double t0_s = 0.0;
  double t1_s = 0.0;
};

/// Splits [t0, t0+dt] at ACC boundary crossings of x(s) = x0 + v0 s + a s^2/2
/// and at the given time breaks.
std::vector<StepPiece> split_step(std::span<const AccDescriptor> track, double t0, double dt,
                                  double x0, double v0, double a, std::span<const double> time_breaks);

/// Exact cost of one step, with position quadratic in time inside the step.
double step_cost(const TrajectoryStep& step, std::span<const AccDescriptor> track,
                 const PriceFunction& prices);

/// Re-prices every step exactly (piecewise in ACC and interval) and refreshes
/// the totals.
void price_trajectory(Trajectory& traj, std::span<const AccDescriptor> track,
                      const PriceFunction& prices);

/// Energy in J per ACC and per interval of `grid`; time outside the grid is dropped.
std::vector<std::vector<double>> interval_energy(const Trajectory& traj,
                                                 std::span<const AccDescriptor> track,
                                                 const HorizonGrid& grid);

/// Solves all legs and concatenates them with zero-power dwells.  `warm`
/// (a previous solution of the same trip) seeds one of the starts.
Trajectory optimize_trip(const TripDefinition& trip, const PriceFunction& prices,
                         const TrainSolverConfig& config = {}, const Trajectory* warm = nullptr);

/// optimize_trip under a uniform unit price: minimizes signed energy.
Trajectory min_work_profile(const TripDefinition& trip, const TrainSolverConfig& config = {});

/// Cost of a measured or simulated trace: resampled to dt, forces from
/// inverse dynamics (clipped to the envelope, with a count), left-Riemann in
/// time with exact ACC splitting along linearly interpolated position.
Trajectory evaluate_profile_cost(std::span<const KinematicSample> trace, const TripDefinition& trip,
                                 const PriceFunction& prices, double dt_s = 5.0);

}  // namespace rdmm
