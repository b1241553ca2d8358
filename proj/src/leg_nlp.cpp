#include "rdmm/leg_nlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "rdmm/errors.hpp"
#include "rdmm/jet.hpp"
#include "rdmm/log.hpp"
#include "rdmm/units.hpp"

namespace rdmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAbsSmoothing = 1e-4;  // in units of the power scale
using J4 = ad::Jet<4>;

bool has_profile(const PiecewiseLinear& p) { return !p.xs().empty(); }

double speed_cap(const TripDefinition& trip) {
  const auto& up = trip.speed_limit.upper;
  if (!has_profile(up)) return trip.train.v_max;
  if (up.is_constant()) return std::min(trip.train.v_max, up.ys().front());
  return std::min(trip.train.v_max, *std::max_element(up.ys().begin(), up.ys().end()));
}

// Longest distance coverable in `duration` from rest to rest under the
// acceleration limits and speed cap.
double reachable_distance(double duration, double accel, double decel, double cap) {
  const double ramp = cap / accel + cap / decel;
  if (duration >= ramp) return cap * duration - 0.5 * cap * cap * (1.0 / accel + 1.0 / decel);
  const double peak = duration * accel * decel / (accel + decel);
  return 0.5 * peak * duration;
}

}  // namespace

template <class T>
struct LegNlp::StepTerms {
  T defect, accel, force, power, objective;
};

LegNlp::LegNlp(const TripDefinition& trip, const LegSchedule& leg, const PriceFunction& prices,
               double dt_s, double smoothing_m)
    : trip_(&trip), prices_(&prices), leg_(leg), smoothing_m_(smoothing_m) {
  if (!(dt_s > 0.0)) throw InvalidArgument("transcribe_leg: time step must be positive");
  if (!(smoothing_m > 0.0)) throw InvalidArgument("transcribe_leg: smoothing width must be positive");
  const double duration = leg.t1_s - leg.t0_s;
  length_ = leg.x1_m - leg.x0_m;
  if (!(duration > 0.0) || !(length_ > 0.0))
    throw InvalidArgument(fmt::format("leg {}: empty duration or length", leg.index));
  steps_ = std::max(2, static_cast<int>(std::ceil(duration / dt_s - 1e-9)));
  dt_ = duration / steps_;

  const TrainSpec& t = trip.train;
  v_scale_ = t.v_max;
  v_cap_ = speed_cap(trip);
  a_scale_ = std::max(t.a_max, -t.a_min);
  f_scale_ = std::max(t.f_max_n, -t.f_min_n);
  p_scale_ = std::max(t.p_max_w, -t.p_min_w);
  eta_even_ = 0.5 * (1.0 / t.eta_traction + t.eta_regen);
  eta_odd_ = 0.5 * (1.0 / t.eta_traction - t.eta_regen);
  const auto& sl = trip.speed_limit;
  upper_limit_rows_ = has_profile(sl.upper) && !sl.upper.is_constant();
  lower_limit_rows_ = has_profile(sl.lower) &&
                      !(sl.lower.is_constant() && sl.lower.ys().front() <= 0.0);

  const double eps = 1e-9 * length_;
  const std::size_t first = acc_of_position(trip.track, leg.x0_m + eps);
  const std::size_t last = acc_of_position(trip.track, leg.x1_m - eps);
  for (std::size_t b = first; b < last; ++b) boundary_m_.push_back(trip.track[b].end_m);
  base_price_.resize(steps_);
  price_jump_.assign(steps_, std::vector<double>(boundary_m_.size()));
  double scale = 0.0;
  for (int k = 0; k < steps_; ++k) {
    const double tm = leg.t0_s + (k + 0.5) * dt_;
    base_price_[k] = prices.at(tm, first);
    scale = std::max(scale, std::abs(base_price_[k]));
    for (std::size_t b = 0; b < boundary_m_.size(); ++b) {
      const double lo = prices.at(tm, first + b), hi = prices.at(tm, first + b + 1);
      price_jump_[k][b] = hi - lo;
      scale = std::max(scale, std::abs(hi));
    }
  }
  price_scale_ = scale > 0.0 ? scale : 1.0;
}

template <class T>
LegNlp::StepTerms<T> LegNlp::step_terms(int k, const T& xi0, const T& xi1, const T& nu0,
                                        const T& nu1) const {
  using std::sin;
  using ad::logistic;
  using ad::sin;
  const TrainSpec& tr = trip_->train;
  const T xa = leg_.x0_m + length_ * xi0;
  const T xb = leg_.x0_m + length_ * xi1;
  const T va = v_scale_ * nu0;
  const T vb = v_scale_ * nu1;
  StepTerms<T> out;
  out.defect = (xb - xa - 0.5 * dt_ * (va + vb)) / (v_scale_ * dt_);
  const T accel = (vb - va) / dt_;
  const T vbar = 0.5 * (va + vb);
  const T xbar = 0.5 * (xa + xb);
  const double xm = ad::value_of(xbar);
  const T alpha = trip_->grade.alpha(xm) + trip_->grade.alpha.slope(xm) * (xbar - xm);
  // Drag is the mean of the node values: with drag at vbar, alternating node
  // speeds would leave the objective unchanged and the optimum non-unique.
  const T drag = tr.davis.a + tr.davis.b * vbar + 0.5 * tr.davis.c * (va * va + vb * vb);
  const T force = tr.mass_kg * accel + drag + tr.mass_kg * units::kGravity * sin(alpha);
  const T power = force * vbar;
  T price = T(base_price_[k]);
  for (std::size_t b = 0; b < boundary_m_.size(); ++b)
    price = price + price_jump_[k][b] * logistic((xbar - boundary_m_[b]) / smoothing_m_);
  out.accel = accel / a_scale_;
  out.force = force / f_scale_;
  out.power = power / p_scale_;
  T electric = eta_even_ * out.power;
  if (eta_odd_ != 0.0) {
    using std::sqrt;
    using ad::sqrt;
    const T abs_power = sqrt(out.power * out.power + kAbsSmoothing * kAbsSmoothing) - kAbsSmoothing;
    electric = electric + eta_odd_ * abs_power;
  }
  out.objective = (price / price_scale_) * electric;
  return out;
}

void LegNlp::local(const Eigen::VectorXd& z, int k, double out[4]) const {
  auto xi = [&](int node) {
    if (node == 0) return 0.0;
    if (node == steps_) return 1.0;
    return z[xi_index(node)];
  };
  auto nu = [&](int node) { return node == 0 || node == steps_ ? 0.0 : z[nu_index(node)]; };
  out[0] = xi(k);
  out[1] = xi(k + 1);
  out[2] = nu(k);
  out[3] = nu(k + 1);
}

int LegNlp::num_constraints() const {
  const int interior = steps_ - 1;
  return kRowsPerStep * steps_ + (upper_limit_rows_ ? interior : 0) + (lower_limit_rows_ ? interior : 0);
}

void LegNlp::bounds(Eigen::VectorXd& x_l, Eigen::VectorXd& x_u, Eigen::VectorXd& g_l,
                    Eigen::VectorXd& g_u) const {
  const TrainSpec& t = trip_->train;
  for (int j = 1; j < steps_; ++j) {
    x_l[xi_index(j)] = -kInf;
    x_u[xi_index(j)] = kInf;
    x_l[nu_index(j)] = 0.0;
    x_u[nu_index(j)] = v_cap_ / v_scale_;
  }
  for (int k = 0; k < steps_; ++k) {
    const int r = kRowsPerStep * k;
    g_l[r] = g_u[r] = 0.0;
    g_l[r + 1] = t.a_min / a_scale_;
    g_u[r + 1] = t.a_max / a_scale_;
    g_l[r + 2] = t.f_min_n / f_scale_;
    g_u[r + 2] = t.f_max_n / f_scale_;
    g_l[r + 3] = t.p_min_w / p_scale_;
    g_u[r + 3] = t.p_max_w / p_scale_;
  }
  int r = kRowsPerStep * steps_;
  if (upper_limit_rows_)
    for (int j = 1; j < steps_; ++j, ++r) {
      g_l[r] = -kInf;
      g_u[r] = 0.0;
    }
  if (lower_limit_rows_)
    for (int j = 1; j < steps_; ++j, ++r) {
      g_l[r] = 0.0;
      g_u[r] = kInf;
    }
}

double LegNlp::objective(const Eigen::VectorXd& z) const {
  double f = 0.0;
  double l[4];
  for (int k = 0; k < steps_; ++k) {
    local(z, k, l);
    f += step_terms<double>(k, l[0], l[1], l[2], l[3]).objective;
  }
  return f;
}

double LegNlp::objective_usd(const Eigen::VectorXd& z) const {
  return objective(z) * price_scale_ * p_scale_ * dt_;
}

void LegNlp::gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
  grad = Eigen::VectorXd::Zero(num_variables());
  double l[4];
  for (int k = 0; k < steps_; ++k) {
    local(z, k, l);
    const auto t = step_terms<J4>(k, J4::variable(l[0], 0), J4::variable(l[1], 1),
                                  J4::variable(l[2], 2), J4::variable(l[3], 3));
    const int idx[4] = {xi_index(k), xi_index(k + 1), nu_index(k), nu_index(k + 1)};
    for (int a = 0; a < 4; ++a)
      if (idx[a] >= 0) grad[idx[a]] += t.objective.g[a];
  }
}

void LegNlp::constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g) const {
  g.resize(num_constraints());
  double l[4];
  for (int k = 0; k < steps_; ++k) {
    local(z, k, l);
    const auto t = step_terms<double>(k, l[0], l[1], l[2], l[3]);
    const int r = kRowsPerStep * k;
    g[r] = t.defect;
    g[r + 1] = t.accel;
    g[r + 2] = t.force;
    g[r + 3] = t.power;
  }
  int r = kRowsPerStep * steps_;
  const auto& sl = trip_->speed_limit;
  if (upper_limit_rows_)
    for (int j = 1; j < steps_; ++j, ++r)
      g[r] = z[nu_index(j)] - sl.upper(leg_.x0_m + length_ * z[xi_index(j)]) / v_scale_;
  if (lower_limit_rows_)
    for (int j = 1; j < steps_; ++j, ++r)
      g[r] = z[nu_index(j)] - sl.lower(leg_.x0_m + length_ * z[xi_index(j)]) / v_scale_;
}

void LegNlp::jacobian(const Eigen::VectorXd& z, std::vector<nlp::Triplet>& out) const {
  out.clear();
  out.reserve(static_cast<std::size_t>(steps_) * kRowsPerStep * 4 + 4 * steps_);
  double l[4];
  for (int k = 0; k < steps_; ++k) {
    local(z, k, l);
    const auto t = step_terms<J4>(k, J4::variable(l[0], 0), J4::variable(l[1], 1),
                                  J4::variable(l[2], 2), J4::variable(l[3], 3));
    const int idx[4] = {xi_index(k), xi_index(k + 1), nu_index(k), nu_index(k + 1)};
    const J4* rows[kRowsPerStep] = {&t.defect, &t.accel, &t.force, &t.power};
    for (int r = 0; r < kRowsPerStep; ++r)
      for (int a = 0; a < 4; ++a)
        if (idx[a] >= 0) out.emplace_back(kRowsPerStep * k + r, idx[a], rows[r]->g[a]);
  }
  int r = kRowsPerStep * steps_;
  const auto& sl = trip_->speed_limit;
  auto limit_rows = [&](const PiecewiseLinear& lim) {
    for (int j = 1; j < steps_; ++j, ++r) {
      const double x = leg_.x0_m + length_ * z[xi_index(j)];
      out.emplace_back(r, nu_index(j), 1.0);
      out.emplace_back(r, xi_index(j), -lim.slope(x) * length_ / v_scale_);
    }
  };
  if (upper_limit_rows_) limit_rows(sl.upper);
  if (lower_limit_rows_) limit_rows(sl.lower);
}

void LegNlp::hessian(const Eigen::VectorXd& z, double obj_factor, const Eigen::VectorXd& lambda,
                     std::vector<nlp::Triplet>& out) const {
  out.clear();
  out.reserve(static_cast<std::size_t>(steps_) * 10);
  double l[4];
  for (int k = 0; k < steps_; ++k) {
    local(z, k, l);
    const auto t = step_terms<J4>(k, J4::variable(l[0], 0), J4::variable(l[1], 1),
                                  J4::variable(l[2], 2), J4::variable(l[3], 3));
    const int idx[4] = {xi_index(k), xi_index(k + 1), nu_index(k), nu_index(k + 1)};
    const int r = kRowsPerStep * k;
    for (int a = 0; a < 4; ++a) {
      if (idx[a] < 0) continue;
      for (int b = 0; b < 4; ++b) {
        if (idx[b] < 0 || idx[b] > idx[a]) continue;
        const double h = obj_factor * t.objective.h[a][b] + lambda[r] * t.defect.h[a][b] +
                         lambda[r + 1] * t.accel.h[a][b] + lambda[r + 2] * t.force.h[a][b] +
                         lambda[r + 3] * t.power.h[a][b];
        out.emplace_back(idx[a], idx[b], h);
      }
    }
  }
}

Eigen::VectorXd LegNlp::pack(const std::vector<double>& x, const std::vector<double>& v) const {
  const auto nodes = static_cast<std::size_t>(steps_ + 1);
  if (x.size() != nodes || v.size() != nodes)
    throw InvalidArgument(fmt::format("leg {}: expected {} nodes", leg_.index, nodes));
  Eigen::VectorXd z(num_variables());
  for (int j = 1; j < steps_; ++j) {
    z[xi_index(j)] = (x[j] - leg_.x0_m) / length_;
    z[nu_index(j)] = v[j] / v_scale_;
  }
  return z;
}

void LegNlp::unpack(const Eigen::VectorXd& z, std::vector<double>& x, std::vector<double>& v) const {
  x.assign(steps_ + 1, 0.0);
  v.assign(steps_ + 1, 0.0);
  x.front() = leg_.x0_m;
  x.back() = leg_.x1_m;
  for (int j = 1; j < steps_; ++j) {
    x[j] = leg_.x0_m + length_ * z[xi_index(j)];
    v[j] = v_scale_ * z[nu_index(j)];
  }
}

Eigen::VectorXd LegNlp::trapezoid_guess(double fraction) const {
  const TrainSpec& t = trip_->train;
  const double duration = steps_ * dt_;
  const double acc = fraction * t.a_max, dec = -fraction * t.a_min;
  const double k = 0.5 / acc + 0.5 / dec;
  const double disc = duration * duration - 4.0 * k * length_;
  std::vector<double> v(steps_ + 1), x(steps_ + 1);
  for (int j = 0; j <= steps_; ++j) {
    const double tt = j * dt_;
    if (disc >= 0.0) {
      const double cruise = (duration - std::sqrt(disc)) / (2.0 * k);
      v[j] = std::min({cruise, acc * tt, dec * (duration - tt)});
    } else {
      // Triangle reaching the mean-distance peak; violates the limits but is
      // only a starting point.
      const double peak = 2.0 * length_ / duration;
      const double tp = duration * dec / (acc + dec);
      v[j] = tt <= tp ? peak * tt / tp : peak * (duration - tt) / (duration - tp);
    }
  }
  v.front() = v.back() = 0.0;
  double dist = 0.0;
  for (int j = 0; j < steps_; ++j) dist += 0.5 * dt_ * (v[j] + v[j + 1]);
  const double s = length_ / dist;
  x[0] = leg_.x0_m;
  for (int j = 0; j <= steps_; ++j) v[j] *= s;
  for (int j = 0; j < steps_; ++j) x[j + 1] = x[j] + 0.5 * dt_ * (v[j] + v[j + 1]);
  x.back() = leg_.x1_m;
  return pack(x, v);
}

LegNlp transcribe_leg(const TripDefinition& trip, const LegSchedule& leg, const PriceFunction& prices,
                      double dt_s, double smoothing_m) {
  const double duration = leg.t1_s - leg.t0_s;
  const double length = leg.x1_m - leg.x0_m;
  const double cap = speed_cap(trip);
  const std::string name = fmt::format("leg {} ({} -> {})", leg.index, leg.from, leg.to);
  if (!(duration > 0.0)) throw InfeasibleError(name + ": no running time");
  const double mean = length / duration;
  if (mean > cap) {
    throw InfeasibleError(fmt::format(
        "{}: required average speed {:.2f} m/s exceeds allowed {:.2f} m/s", name, mean, cap));
  }
  const double reach = reachable_distance(duration, trip.train.a_max, -trip.train.a_min, cap);
  if (length > reach) {
    throw InfeasibleError(fmt::format(
        "{}: {:.0f} m in {:.0f} s needs average speed {:.2f} m/s; acceleration limits allow at most "
        "{:.2f} m/s",
        name, length, duration, mean, reach / duration));
  }
  return LegNlp(trip, leg, prices, dt_s, smoothing_m);
}

std::vector<TrajectoryStep> leg_steps(const LegNlp& nlp, const std::vector<double>& x,
                                      const std::vector<double>& v) {
  const TripDefinition& trip = nlp.trip();
  const TrainSpec& t = trip.train;
  std::vector<TrajectoryStep> steps(nlp.steps());
  for (int k = 0; k < nlp.steps(); ++k) {
    TrajectoryStep& s = steps[k];
    s.t0_s = nlp.leg().t0_s + k * nlp.dt();
    s.dt_s = nlp.dt();
    s.x0_m = x[k];
    s.x1_m = x[k + 1];
    s.v0_mps = std::max(0.0, v[k]);
    s.v1_mps = std::max(0.0, v[k + 1]);
    const double vbar = 0.5 * (s.v0_mps + s.v1_mps);
    const double xbar = 0.5 * (s.x0_m + s.x1_m);
    s.resistance_n = 0.5 * (davis_force(t, s.v0_mps) + davis_force(t, s.v1_mps));
    s.grade_n = t.mass_kg * units::kGravity * std::sin(trip.grade.angle(xbar));
    s.traction_n = t.mass_kg * s.accel() + s.resistance_n + s.grade_n;
    s.power_w = electrical_power(t, s.traction_n * vbar);
    s.cost_usd = step_cost(s, trip.track, nlp.prices());
  }
  return steps;
}

LegSolution optimize_leg(const LegNlp& nlp, const TrainSolverConfig& config,
                         const Eigen::VectorXd* warm) {
  std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ULL * (nlp.leg().index + 1));
  std::uniform_real_distribution<double> frac(0.25, 0.8);
  std::vector<Eigen::VectorXd> starts;
  const int count = std::max(1, config.multi_starts);
  for (int s = 0; s < count; ++s) {
    if (s == 0) starts.push_back(nlp.trapezoid_guess(0.5));
    else if (s == 1) starts.push_back(nlp.trapezoid_guess(0.95));
    else if (s == 2 && warm && warm->size() == nlp.num_variables()) starts.push_back(*warm);
    else starts.push_back(nlp.trapezoid_guess(frac(rng)));
  }

  LegSolution best;
  bool found = false;
  std::string dump;
  if (warm && warm->size() == nlp.num_variables()) {
    nlp.unpack(*warm, best.x, best.v);
    for (const auto& st : leg_steps(nlp, best.x, best.v)) best.cost_usd += st.cost_usd;
    best.result.status = nlp::Status::kSolved;
    best.result.x = *warm;
    best.start = -1;
    found = true;
  }
  for (std::size_t s = 0; s < starts.size(); ++s) {
    nlp::Result r = nlp::solve(nlp, starts[s], config.nlp);
    dump += fmt::format("start {}: {} after {} iterations, objective {:.9g}, infeasibility {:.3e}, "
                        "stationarity {:.3e}\n",
                        s, nlp::to_string(r.status), r.iterations, r.objective, r.infeasibility,
                        r.stationarity);
    log::debug("leg {} start {}: {} ({} iterations)", nlp.leg().index, s, nlp::to_string(r.status),
               r.iterations);
    if (!r.ok()) continue;
    LegSolution cand;
    nlp.unpack(r.x, cand.x, cand.v);
    double cost = 0.0;
    for (const auto& st : leg_steps(nlp, cand.x, cand.v)) cost += st.cost_usd;
    cand.cost_usd = cost;
    cand.result = std::move(r);
    cand.start = static_cast<int>(s);
    if (!found || cand.cost_usd < best.cost_usd) {
      best = std::move(cand);
      found = true;
    }
  }
  if (!found) {
    throw OptimizationError(fmt::format("leg {} ({} -> {}): no start converged", nlp.leg().index,
                                        nlp.leg().from, nlp.leg().to),
                            dump);
  }
  return best;
}

}  // namespace rdmm
