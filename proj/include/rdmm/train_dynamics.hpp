#pragma once

#include <functional>
#include <span>
#include <vector>

#include "rdmm/core.hpp"

namespace rdmm {

/// Speed below which the power-limited force bound is evaluated at v_eps.
inline constexpr double kEnvelopeSpeedFloor = 0.5;

struct KinematicSample {
  double t = 0.0;  // s
  double x = 0.0;  // m
  double v = 0.0;  // m/s
  double a = 0.0;  // m/s^2
};

/// Forces acting on the consist.  m a = traction - resistance - grade.
struct ForceBreakdown {
  double traction_n = 0.0;   // signed, negative when braking
  double resistance_n = 0.0; // Davis drag, >= 0
  double grade_n = 0.0;      // m g sin(alpha), positive uphill
  double power_w = 0.0;      // electrical power at the pantograph, signed
  bool within_limits = true; // force envelope and power limits respected
};

struct TractionEnvelope {
  double min_n = 0.0;
  double max_n = 0.0;
};

/// Davis resistance A + B v + C v^2.  Throws InvalidArgument for v < 0.
double davis_force(const TrainSpec& spec, double v);

/// Constant-force / constant-power envelope at speed v.
TractionEnvelope traction_limits(const TrainSpec& spec, double v);

/// Electrical power for a mechanical traction power (efficiency hooks).
double electrical_power(const TrainSpec& spec, double mechanical_w);

/// Inverse dynamics.  With clip = true the traction force is clamped to the
/// envelope and power limits; otherwise violations are only flagged.
ForceBreakdown power_from_kinematics(const TrainSpec& spec, const GradeProfile& grade,
                                     const KinematicSample& s, bool clip = false);

/// Semi-implicit Euler: v first, then x with the new v.  Speed is clamped at
/// zero (with a warning).  Returns samples at t0, t0+dt, ..., covering
/// `duration`; the acceleration of each sample is the one applied after it.
std::vector<KinematicSample> integrate_forward(const TrainSpec& spec, const GradeProfile& grade,
                                               const std::function<double(double)>& traction_n,
                                               double x0, double v0, double dt, double duration,
                                               double t0 = 0.0);

/// Energy audit over a node sequence with one traction force per interval.
struct WorkEnergyBalance {
  double traction_work = 0.0;   // sum F_T * (v_k + v_k+1)/2 * dt
  double resistance_work = 0.0; // trapezoid of F_DF v
  double potential_change = 0.0;
  double kinetic_change = 0.0;
  double traction_work_abs = 0.0;

  double residual() const {
    return traction_work - resistance_work - potential_change - kinetic_change;
  }
  /// |residual| / max(int |F_T v|, |dKE|).
  double relative_residual() const;
};

WorkEnergyBalance work_energy_balance(const TrainSpec& spec, const GradeProfile& grade,
                                      std::span<const KinematicSample> nodes,
                                      std::span<const double> interval_traction_n);

}  // namespace rdmm
