#pragma once

#include <vector>

#include <Eigen/Core>

#include "rdmm/interior_point.hpp"
#include "rdmm/train_dispatch.hpp"

namespace rdmm {

/**
 * @brief Direct transcription of one leg on a uniform time grid.
 *
 * Unknowns are position and speed at the interior nodes, scaled to
 * xi = (x - x0)/length and nu = v/v_max; the end nodes are fixed at the
 * stations with v = 0.  Per step k the constraint rows are
 *
 *   trapezoidal defect  x_k+1 - x_k - dt (v_k + v_k+1)/2 = 0
 *   acceleration        a_min <= (v_k+1 - v_k)/dt <= a_max
 *   traction            f_min <= F_k <= f_max
 *   power               p_min <= F_k * vbar_k <= p_max
 *
 * with F_k = m a_k + mean node drag + grade force at the mid position,
 * followed by one row
 * per interior node for each non-constant speed limit.  The objective is the
 * priced electrical energy sum_k price_k(xbar_k) E(P_k) dt, normalized, where
 * E applies the efficiency hooks through a smoothed |P| when they differ
 * from one; the price is
 * sampled at the step's mid time and smoothed across ACC boundaries in
 * position so the objective stays twice differentiable.
 *
 * Holds pointers to `trip` and `prices`; both must outlive the object.
 */
class LegNlp : public nlp::Problem {
 public:
  LegNlp(const TripDefinition& trip, const LegSchedule& leg, const PriceFunction& prices,
         double dt_s, double smoothing_m);

  int steps() const noexcept { return steps_; }
  const TripDefinition& trip() const noexcept { return *trip_; }
  const PriceFunction& prices() const noexcept { return *prices_; }
  double dt() const noexcept { return dt_; }
  const LegSchedule& leg() const noexcept { return leg_; }

  /// Node vectors (including the fixed ends) to the scaled unknowns and back.
  Eigen::VectorXd pack(const std::vector<double>& x, const std::vector<double>& v) const;
  void unpack(const Eigen::VectorXd& z, std::vector<double>& x, std::vector<double>& v) const;

  /// Trapezoidal speed profile accelerating at `fraction` of the limits,
  /// integrated so that the defects vanish.
  Eigen::VectorXd trapezoid_guess(double fraction) const;

  /// Physical objective value in $ (the normalized objective times its scale).
  double objective_usd(const Eigen::VectorXd& z) const;

  int num_variables() const override { return 2 * (steps_ - 1); }
  int num_constraints() const override;
  void bounds(Eigen::VectorXd& x_l, Eigen::VectorXd& x_u, Eigen::VectorXd& g_l,
              Eigen::VectorXd& g_u) const override;
  double objective(const Eigen::VectorXd& z) const override;
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override;
  void constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override;
  void jacobian(const Eigen::VectorXd& z, std::vector<nlp::Triplet>& out) const override;
  void hessian(const Eigen::VectorXd& z, double obj_factor, const Eigen::VectorXd& lambda,
               std::vector<nlp::Triplet>& out) const override;

  static constexpr int kRowsPerStep = 4;

 private:
  template <class T>
  struct StepTerms;
  template <class T>
  StepTerms<T> step_terms(int k, const T& xi0, const T& xi1, const T& nu0, const T& nu1) const;
  int xi_index(int node) const { return node == 0 || node == steps_ ? -1 : 2 * (node - 1); }
  int nu_index(int node) const { return node == 0 || node == steps_ ? -1 : 2 * (node - 1) + 1; }
  void local(const Eigen::VectorXd& z, int k, double out[4]) const;

  const TripDefinition* trip_;
  const PriceFunction* prices_;
  LegSchedule leg_;
  int steps_ = 0;
  double dt_ = 0.0;
  double length_ = 0.0;
  double v_scale_ = 0.0;
  double v_cap_ = 0.0;
  double a_scale_ = 0.0, f_scale_ = 0.0, p_scale_ = 0.0;
  double price_scale_ = 1.0;
  double smoothing_m_ = 0.0;
  // Electrical power = eta_even_ * P + eta_odd_ * |P|.
  double eta_even_ = 1.0, eta_odd_ = 0.0;
  bool upper_limit_rows_ = false;
  bool lower_limit_rows_ = false;
  // Price model per step: base price plus logistic steps at ACC boundaries.
  std::vector<double> base_price_;
  std::vector<std::vector<double>> price_jump_;
  std::vector<double> boundary_m_;
};

/// Builds the transcription after checking that the leg timing is feasible.
/// Throws InfeasibleError with a required-vs-allowed speed report.
LegNlp transcribe_leg(const TripDefinition& trip, const LegSchedule& leg, const PriceFunction& prices,
                      double dt_s = 5.0, double smoothing_m = 250.0);

struct LegSolution {
  std::vector<double> x, v;  // node values, fixed ends included
  nlp::Result result;
  double cost_usd = 0.0;     // exact piecewise cost
  int start = 0;             // index of the winning start; -1 keeps the warm point
};

/// Steps of a leg from its node values, priced exactly.
std::vector<TrajectoryStep> leg_steps(const LegNlp& nlp, const std::vector<double>& x,
                                      const std::vector<double>& v);

/// Multi-start local solve; the best converged start by exact cost wins.
/// `warm` (scaled unknowns of a previous solve) replaces the random start and
/// is itself a candidate, so a repeated solve under the same prices never
/// returns a costlier profile.  Throws OptimizationError if no start converges.
LegSolution optimize_leg(const LegNlp& nlp, const TrainSolverConfig& config,
                         const Eigen::VectorXd* warm = nullptr);

}  // namespace rdmm
