#include "rdmm/train_dynamics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "rdmm/errors.hpp"
#include "rdmm/log.hpp"
#include "rdmm/units.hpp"

namespace rdmm {

double davis_force(const TrainSpec& spec, double v) {
  if (!(v >= 0.0)) throw InvalidArgument(fmt::format("davis_force: negative speed {}", v));
  return spec.davis.a + spec.davis.b * v + spec.davis.c * v * v;
}

TractionEnvelope traction_limits(const TrainSpec& spec, double v) {
  const double vv = std::max(v, kEnvelopeSpeedFloor);
  return {std::max(spec.f_min_n, spec.p_min_w / vv), std::min(spec.f_max_n, spec.p_max_w / vv)};
}

double electrical_power(const TrainSpec& spec, double mechanical_w) {
  return mechanical_w >= 0.0 ? mechanical_w / spec.eta_traction : mechanical_w * spec.eta_regen;
}

ForceBreakdown power_from_kinematics(const TrainSpec& spec, const GradeProfile& grade,
                                     const KinematicSample& s, bool clip) {
  ForceBreakdown f;
  f.resistance_n = davis_force(spec, s.v);
  f.grade_n = spec.mass_kg * units::kGravity * std::sin(grade.angle(s.x));
  f.traction_n = spec.mass_kg * s.a + f.resistance_n + f.grade_n;

  const TractionEnvelope env = traction_limits(spec, s.v);
  const double rel = 1e-9 * std::max(std::abs(f.traction_n), 1.0);
  bool ok = f.traction_n <= env.max_n + rel && f.traction_n >= env.min_n - rel;
  if (clip) f.traction_n = std::clamp(f.traction_n, env.min_n, env.max_n);

  f.power_w = electrical_power(spec, f.traction_n * s.v);
  const double prel = 1e-9 * std::max(std::abs(f.power_w), 1.0);
  ok = ok && f.power_w <= spec.p_max_w + prel && f.power_w >= spec.p_min_w - prel;
  if (clip) f.power_w = std::clamp(f.power_w, spec.p_min_w, spec.p_max_w);
  f.within_limits = ok;
  return f;
}

std::vector<KinematicSample> integrate_forward(const TrainSpec& spec, const GradeProfile& grade,
                                               const std::function<double(double)>& traction_n,
                                               double x0, double v0, double dt, double duration,
                                               double t0) {
  if (!(dt > 0.0)) throw InvalidArgument("integrate_forward: step must be positive");
  if (!(duration >= 0.0)) throw InvalidArgument("integrate_forward: negative duration");
  if (!(v0 >= 0.0)) throw InvalidArgument("integrate_forward: negative initial speed");
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));

  std::vector<KinematicSample> out;
  out.reserve(steps + 1);
  KinematicSample s{t0, x0, v0, 0.0};
  bool warned = false;
  for (std::size_t k = 0; k < steps; ++k) {
    const double f = traction_n(s.t);
    if (!std::isfinite(f))
      throw InvalidArgument(fmt::format("integrate_forward: non-finite force at t={}", s.t));
    const double grade_n = spec.mass_kg * units::kGravity * std::sin(grade.angle(s.x));
    s.a = (f - davis_force(spec, s.v) - grade_n) / spec.mass_kg;
    out.push_back(s);
    double v_next = s.v + dt * s.a;
    if (v_next < 0.0) {
      if (!warned) log::warn("integrate_forward: speed clamped at zero at t={:.3f}", s.t);
      warned = true;
      v_next = 0.0;
    }
    s.x += dt * v_next;
    s.v = v_next;
    s.t = t0 + static_cast<double>(k + 1) * dt;
    s.a = 0.0;
  }
  out.push_back(s);
  return out;
}

double WorkEnergyBalance::relative_residual() const {
  const double scale = std::max(traction_work_abs, std::abs(kinetic_change));
  return scale > 0.0 ? std::abs(residual()) / scale : std::abs(residual());
}

WorkEnergyBalance work_energy_balance(const TrainSpec& spec, const GradeProfile& grade,
                                      std::span<const KinematicSample> nodes,
                                      std::span<const double> interval_traction_n) {
  if (nodes.size() < 2) throw InvalidArgument("work_energy_balance: need at least two nodes");
  if (interval_traction_n.size() + 1 != nodes.size())
    throw InvalidArgument("work_energy_balance: one traction force per interval expected");
  WorkEnergyBalance b;
  const double mg = spec.mass_kg * units::kGravity;
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const auto& p = nodes[k];
    const auto& q = nodes[k + 1];
    const double dt = q.t - p.t;
    const double vbar = 0.5 * (p.v + q.v);
    const double w = interval_traction_n[k] * vbar * dt;
    b.traction_work += w;
    b.traction_work_abs += std::abs(w);
    b.resistance_work += 0.5 * dt * (davis_force(spec, p.v) * p.v + davis_force(spec, q.v) * q.v);
    b.potential_change += mg * std::sin(grade.angle(0.5 * (p.x + q.x))) * (q.x - p.x);
  }
  const double v0 = nodes.front().v, v1 = nodes.back().v;
  b.kinetic_change = 0.5 * spec.mass_kg * (v1 * v1 - v0 * v0);
  return b;
}

}  // namespace rdmm
