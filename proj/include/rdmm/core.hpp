#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rdmm {

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

/**
 * @brief Rolling dispatch horizon of M equal intervals.
 *
 * Intervals are indexed 0..M-1 in code (interval K of the market notation is
 * index K-1).  Interval k covers the half-open span
 * [start + k*length, start + (k+1)*length).
 */
class HorizonGrid {
 public:
  HorizonGrid(double start_s, int intervals, double interval_length_s);

  int size() const noexcept { return intervals_; }
  double start() const noexcept { return start_; }
  double interval_length() const noexcept { return length_; }
  double interval_hours() const noexcept;
  double end() const noexcept { return start_ + intervals_ * length_; }
  double begin_of(int k) const;
  double end_of(int k) const;

  /// Index of the interval containing t; throws OutOfRange outside the horizon.
  int interval_of(double t) const;
  std::optional<int> find_interval(double t) const noexcept;

  /// Same grid shifted forward by n intervals.
  HorizonGrid advanced(int n = 1) const;

  bool operator==(const HorizonGrid&) const = default;

 private:
  double start_;
  int intervals_;
  double length_;
};

HorizonGrid build_time_grid(double start_s, int intervals, double interval_length_s);

// ---------------------------------------------------------------------------
// Track sectioning
// ---------------------------------------------------------------------------

/// One Area Control Center: a contiguous span of track with a single price.
struct AccDescriptor {
  std::string id;
  double start_m = 0.0;
  double end_m = 0.0;
  std::vector<std::string> agent_ids;
  std::vector<std::string> passive_profile_ids;

  bool operator==(const AccDescriptor&) const = default;
};

/// Throws InvalidArgument unless the spans are non-empty, ordered and contiguous.
void validate_track(std::span<const AccDescriptor> track);

/// Index of the ACC owning x.  Spans are [start, end) except the last, which
/// is closed on the right.  Throws OutOfRange off the track.
std::size_t acc_of_position(std::span<const AccDescriptor> track, double x);

// ---------------------------------------------------------------------------
// Dispatchable agents and passive forecasts
// ---------------------------------------------------------------------------

enum class AgentKind { kHeating, kElectricGeneration, kCogeneration, kNetworkConnection };

std::string_view to_string(AgentKind kind);
AgentKind agent_kind_from_string(std::string_view name);

/**
 * @brief A dispatchable DER with a quadratic cost per interval.
 *
 * The setpoint y is an energy per interval (kWh).  Electric and thermal
 * outputs are d_e*y and d_th*y; cost is a + b*y + c*y^2/2 with b in $/kWh and
 * c in $/kWh^2.  All vectors have one entry per dispatch interval.
 */
struct DispatchableAgent {
  std::string id;
  AgentKind kind = AgentKind::kElectricGeneration;
  std::vector<double> d_e;
  std::vector<double> d_th;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  std::vector<double> y_min;
  std::vector<double> y_max;

  std::size_t horizon() const noexcept { return d_e.size(); }
  void validate(std::size_t intervals) const;

  bool operator==(const DispatchableAgent&) const = default;
};

/// Agent with time-invariant parameters broadcast over `intervals`.
DispatchableAgent make_agent(std::string id, AgentKind kind, std::size_t intervals, double d_e,
                             double d_th, double a, double b, double c, double y_min,
                             double y_max);

/**
 * Passive (non-dispatchable) forecasts in kW, generation positive and load
 * negative.  Each series holds one length-M profile per forecast instance j;
 * queries past the last instance reuse the last one.  Empty means zero.
 */
struct PassiveProfiles {
  std::string id;
  std::vector<std::vector<double>> renewable_kw;
  std::vector<std::vector<double>> electric_kw;
  std::vector<std::vector<double>> thermal_kw;

  std::vector<double> renewable(std::size_t j, std::size_t intervals) const;
  std::vector<double> electric(std::size_t j, std::size_t intervals) const;
  std::vector<double> thermal(std::size_t j, std::size_t intervals) const;
  void validate(std::size_t intervals) const;

  bool operator==(const PassiveProfiles&) const = default;
};

// ---------------------------------------------------------------------------
// Train and route description
// ---------------------------------------------------------------------------

/// Davis resistance A + B v + C v^2 for the whole consist.
struct DavisCoefficients {
  double a = 0.0;  // N
  double b = 0.0;  // N s/m
  double c = 0.0;  // N s^2/m^2

  bool operator==(const DavisCoefficients&) const = default;
};

struct TrainSpec {
  std::string id = "train";
  double mass_kg = 0.0;
  double p_max_w = 0.0;  // traction power limit
  double p_min_w = 0.0;  // regeneration limit (negative)
  double a_min = 0.0;    // m/s^2, negative
  double a_max = 0.0;    // m/s^2
  double v_max = 0.0;    // consist maximum speed, m/s
  DavisCoefficients davis;
  double f_max_n = 0.0;  // constant-force part of the traction envelope
  double f_min_n = 0.0;  // negative
  double eta_traction = 1.0;
  double eta_regen = 1.0;

  void validate() const;
  bool operator==(const TrainSpec&) const = default;
};

/// Acela trainset at 545 t.  The constant-force envelope is sized so the
/// acceleration limit is reachable from standstill at full (556.7 t) load.
TrainSpec acela_train_spec();

struct Station {
  std::string name;
  double x_m = 0.0;
  double earliest_arrival_s = 0.0;
  double latest_departure_s = 0.0;
  double dwell_s = 0.0;

  bool operator==(const Station&) const = default;
};

struct Timetable {
  std::vector<Station> stations;

  void validate() const;
  bool operator==(const Timetable&) const = default;
};

/// Piecewise-linear function of position.  Constant extension past the ends;
/// an empty table evaluates to zero.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(double constant);
  PiecewiseLinear(std::vector<double> xs, std::vector<double> ys);

  double operator()(double x) const noexcept;
  double slope(double x) const noexcept;
  bool is_constant() const noexcept;
  const std::vector<double>& xs() const noexcept { return xs_; }
  const std::vector<double>& ys() const noexcept { return ys_; }

  bool operator==(const PiecewiseLinear&) const = default;

 private:
  std::vector<double> xs_;
  std::vector<double> ys_;
};

/// Track inclination alpha(x) in radians.
struct GradeProfile {
  PiecewiseLinear alpha;

  static GradeProfile level() { return {}; }
  double angle(double x) const noexcept { return alpha(x); }
  void validate() const;

  bool operator==(const GradeProfile&) const = default;
};

/// Civil speed limits v_lo(x) <= v <= v_hi(x).
struct SpeedLimitProfile {
  PiecewiseLinear upper;
  PiecewiseLinear lower;

  static SpeedLimitProfile constant(double v_max) { return {PiecewiseLinear(v_max), {}}; }
  bool operator==(const SpeedLimitProfile&) const = default;
};

}  // namespace rdmm
