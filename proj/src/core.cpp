#include "rdmm/core.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "rdmm/errors.hpp"
#include "rdmm/units.hpp"

namespace rdmm {

// ---------------------------------------------------------------------------
// HorizonGrid

HorizonGrid::HorizonGrid(double start_s, int intervals, double interval_length_s)
    : start_(start_s), intervals_(intervals), length_(interval_length_s) {
  if (intervals < 1) {
    throw InvalidArgument(fmt::format("horizon needs at least one interval, got {}", intervals));
  }
  if (!(interval_length_s > 0.0) || !std::isfinite(interval_length_s)) {
    throw InvalidArgument(fmt::format("interval length must be positive, got {}", interval_length_s));
  }
  if (!std::isfinite(start_s)) throw InvalidArgument("horizon start must be finite");
}

double HorizonGrid::interval_hours() const noexcept { return length_ / units::kSecondsPerHour; }

double HorizonGrid::begin_of(int k) const {
  if (k < 0 || k >= intervals_) throw OutOfRange(fmt::format("interval {} outside horizon", k));
  return start_ + k * length_;
}

double HorizonGrid::end_of(int k) const { return begin_of(k) + length_; }

std::optional<int> HorizonGrid::find_interval(double t) const noexcept {
  if (!(t >= start_) || !(t < end())) return std::nullopt;
  auto k = static_cast<int>(std::floor((t - start_) / length_));
  // floor can land one past a boundary through rounding
  k = std::clamp(k, 0, intervals_ - 1);
  if (t < start_ + k * length_) --k;
  else if (k + 1 < intervals_ && t >= start_ + (k + 1) * length_) ++k;
  return k;
}

int HorizonGrid::interval_of(double t) const {
  auto k = find_interval(t);
  if (!k) {
    throw OutOfRange(fmt::format("time {} outside horizon [{}, {})", t, start_, end()));
  }
  return *k;
}

HorizonGrid HorizonGrid::advanced(int n) const {
  return HorizonGrid(start_ + n * length_, intervals_, length_);
}

HorizonGrid build_time_grid(double start_s, int intervals, double interval_length_s) {
  return HorizonGrid(start_s, intervals, interval_length_s);
}

// ---------------------------------------------------------------------------
// Track

void validate_track(std::span<const AccDescriptor> track) {
  if (track.empty()) throw InvalidArgument("track has no ACCs");
  for (std::size_t n = 0; n < track.size(); ++n) {
    const auto& acc = track[n];
    if (!(acc.end_m > acc.start_m)) {
      throw InvalidArgument(fmt::format("ACC '{}' has empty span [{}, {}]", acc.id, acc.start_m, acc.end_m));
    }
    if (n > 0 && acc.start_m != track[n - 1].end_m) {
      throw InvalidArgument(fmt::format("ACC '{}' does not start where '{}' ends", acc.id, track[n - 1].id));
    }
  }
}

std::size_t acc_of_position(std::span<const AccDescriptor> track, double x) {
  if (track.empty()) throw InvalidArgument("track has no ACCs");
  if (!(x >= track.front().start_m) || !(x <= track.back().end_m)) {
    throw OutOfRange(fmt::format("position {} m outside track [{}, {}]", x, track.front().start_m,
                                 track.back().end_m));
  }
  auto it = std::upper_bound(track.begin(), track.end(), x,
                             [](double v, const AccDescriptor& acc) { return v < acc.end_m; });
  if (it == track.end()) return track.size() - 1;
  return static_cast<std::size_t>(it - track.begin());
}

// ---------------------------------------------------------------------------
// Agents

std::string_view to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kHeating: return "heating";
    case AgentKind::kElectricGeneration: return "electric-gen";
    case AgentKind::kCogeneration: return "cogeneration";
    case AgentKind::kNetworkConnection: return "network-connection";
  }
  return "unknown";
}

AgentKind agent_kind_from_string(std::string_view name) {
  if (name == "heating") return AgentKind::kHeating;
  if (name == "electric-gen") return AgentKind::kElectricGeneration;
  if (name == "cogeneration") return AgentKind::kCogeneration;
  if (name == "network-connection") return AgentKind::kNetworkConnection;
  throw InvalidArgument(fmt::format("unknown agent kind '{}'", name));
}

void DispatchableAgent::validate(std::size_t intervals) const {
  auto check_len = [&](const std::vector<double>& v, const char* name) {
    if (v.size() != intervals) {
      throw InvalidArgument(fmt::format("agent '{}': {} has length {}, expected {}", id, name,
                                        v.size(), intervals));
    }
    for (double e : v) {
      if (!std::isfinite(e)) throw InvalidArgument(fmt::format("agent '{}': {} not finite", id, name));
    }
  };
  check_len(d_e, "d_e");
  check_len(d_th, "d_th");
  check_len(a, "a");
  check_len(b, "b");
  check_len(c, "c");
  check_len(y_min, "y_min");
  check_len(y_max, "y_max");
  for (std::size_t k = 0; k < intervals; ++k) {
    if (c[k] < 0.0) throw InvalidArgument(fmt::format("agent '{}': c[{}] < 0 (nonconvex)", id, k));
    if (y_min[k] > y_max[k]) {
      throw InvalidArgument(fmt::format("agent '{}': y_min[{}] > y_max[{}]", id, k, k));
    }
    if (d_e[k] == 0.0 && d_th[k] == 0.0) {
      throw InvalidArgument(fmt::format("agent '{}': d_e and d_th both zero at interval {}", id, k));
    }
  }
}

DispatchableAgent make_agent(std::string id, AgentKind kind, std::size_t intervals, double d_e,
                             double d_th, double a, double b, double c, double y_min,
                             double y_max) {
  DispatchableAgent agent;
  agent.id = std::move(id);
  agent.kind = kind;
  agent.d_e.assign(intervals, d_e);
  agent.d_th.assign(intervals, d_th);
  agent.a.assign(intervals, a);
  agent.b.assign(intervals, b);
  agent.c.assign(intervals, c);
  agent.y_min.assign(intervals, y_min);
  agent.y_max.assign(intervals, y_max);
  agent.validate(intervals);
  return agent;
}

namespace {

std::vector<double> pick_instance(const std::vector<std::vector<double>>& series, std::size_t j,
                                  std::size_t intervals) {
  if (series.empty()) return std::vector<double>(intervals, 0.0);
  return series[std::min(j, series.size() - 1)];
}

}  // namespace

std::vector<double> PassiveProfiles::renewable(std::size_t j, std::size_t intervals) const {
  return pick_instance(renewable_kw, j, intervals);
}
std::vector<double> PassiveProfiles::electric(std::size_t j, std::size_t intervals) const {
  return pick_instance(electric_kw, j, intervals);
}
std::vector<double> PassiveProfiles::thermal(std::size_t j, std::size_t intervals) const {
  return pick_instance(thermal_kw, j, intervals);
}

void PassiveProfiles::validate(std::size_t intervals) const {
  auto check = [&](const std::vector<std::vector<double>>& series, const char* name, int sign) {
    for (std::size_t j = 0; j < series.size(); ++j) {
      if (series[j].size() != intervals) {
        throw InvalidArgument(fmt::format("passive '{}': {}[{}] has length {}, expected {}", id,
                                          name, j, series[j].size(), intervals));
      }
      for (double v : series[j]) {
        if (!std::isfinite(v) || v * sign < 0.0) {
          throw InvalidArgument(fmt::format("passive '{}': {} violates sign convention ({})", id,
                                            name, sign > 0 ? "generation >= 0" : "load <= 0"));
        }
      }
    }
  };
  check(renewable_kw, "renewable_kw", +1);
  check(electric_kw, "electric_kw", -1);
  check(thermal_kw, "thermal_kw", -1);
}

// ---------------------------------------------------------------------------
// Train

void TrainSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw InvalidArgument(fmt::format("train '{}': {}", id, what));
  };
  if (!(mass_kg > 0.0)) fail("mass must be positive");
  if (!(p_min_w < 0.0 && p_max_w > 0.0)) fail("need p_min < 0 < p_max");
  if (!(a_min < 0.0 && a_max > 0.0)) fail("need a_min < 0 < a_max");
  if (!(v_max > 0.0)) fail("v_max must be positive");
  if (davis.a < 0.0 || davis.b < 0.0 || davis.c < 0.0) fail("Davis coefficients must be >= 0");
  if (!(f_max_n > 0.0 && f_min_n < 0.0)) fail("need f_min < 0 < f_max");
  if (!(eta_traction > 0.0 && eta_traction <= 1.0 && eta_regen > 0.0 && eta_regen <= 1.0)) {
    fail("efficiencies must lie in (0, 1]");
  }
}

TrainSpec acela_train_spec() {
  TrainSpec spec;
  spec.id = "acela";
  spec.mass_kg = 545'000.0;
  spec.p_max_w = 9.2e6;
  spec.p_min_w = -6.0e6;
  spec.a_min = -0.5;
  spec.a_max = 0.5;
  spec.v_max = 66.67;
  spec.davis = {10'195.16, 65.81, 25.02};
  constexpr double kFullLoadKg = 556'700.0;
  spec.f_max_n = kFullLoadKg * spec.a_max + spec.davis.a;
  spec.f_min_n = -spec.f_max_n;
  return spec;
}

void Timetable::validate() const {
  if (stations.size() < 2) throw InvalidArgument("timetable needs at least two stations");
  for (std::size_t s = 0; s < stations.size(); ++s) {
    const auto& st = stations[s];
    if (st.dwell_s < 0.0) throw InvalidArgument(fmt::format("station '{}': negative dwell", st.name));
    bool first = s == 0;
    bool last = s + 1 == stations.size();
    if (!first && !last && st.earliest_arrival_s + st.dwell_s > st.latest_departure_s) {
      throw InvalidArgument(fmt::format(
          "station '{}': earliest arrival + dwell exceeds latest departure", st.name));
    }
    if (s > 0) {
      const auto& prev = stations[s - 1];
      if (!(st.x_m > prev.x_m)) {
        throw InvalidArgument(fmt::format("station '{}' is not past '{}'", st.name, prev.name));
      }
      if (!(st.earliest_arrival_s > prev.latest_departure_s)) {
        throw InvalidArgument(fmt::format("no running time between '{}' and '{}'", prev.name, st.name));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Profiles

PiecewiseLinear::PiecewiseLinear(double constant) : xs_{0.0}, ys_{constant} {}

PiecewiseLinear::PiecewiseLinear(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  if (xs_.size() != ys_.size()) throw InvalidArgument("piecewise-linear table size mismatch");
  for (std::size_t i = 1; i < xs_.size(); ++i) {
    if (!(xs_[i] > xs_[i - 1])) throw InvalidArgument("piecewise-linear breakpoints must increase");
  }
}

double PiecewiseLinear::operator()(double x) const noexcept {
  if (xs_.empty()) return 0.0;
  if (x <= xs_.front()) return ys_.front();
  if (x >= xs_.back()) return ys_.back();
  auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  auto i = static_cast<std::size_t>(it - xs_.begin());
  double w = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
  return ys_[i - 1] + w * (ys_[i] - ys_[i - 1]);
}

double PiecewiseLinear::slope(double x) const noexcept {
  if (xs_.size() < 2 || x <= xs_.front() || x >= xs_.back()) return 0.0;
  auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  auto i = static_cast<std::size_t>(it - xs_.begin());
  return (ys_[i] - ys_[i - 1]) / (xs_[i] - xs_[i - 1]);
}

bool PiecewiseLinear::is_constant() const noexcept {
  return std::all_of(ys_.begin(), ys_.end(), [&](double y) { return y == ys_.front(); });
}

void GradeProfile::validate() const {
  for (double a : alpha.ys()) {
    if (!(std::abs(a) < 0.2)) throw InvalidArgument(fmt::format("grade angle {} rad out of range", a));
  }
}

}  // namespace rdmm
