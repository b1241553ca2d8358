#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

// Primal-dual interior-point solver for sparse nonlinear programs
//
//   min f(x)  s.t.  g_l <= g(x) <= g_u,  x_l <= x <= x_u
//
// Rows with g_l == g_u are equalities; the others receive a slack variable.
// Infinite bounds are allowed.  The Newton system is factorized with a sparse
// LDL^T and the Hessian is regularized until the inertia is correct; steps
// are globalized with an l1 merit function, Armijo backtracking and a
// second-order correction.
namespace rdmm::nlp {

using Triplet = Eigen::Triplet<double>;

class Problem {
 public:
  virtual ~Problem() = default;

  virtual int num_variables() const = 0;
  virtual int num_constraints() const = 0;
  virtual void bounds(Eigen::VectorXd& x_l, Eigen::VectorXd& x_u, Eigen::VectorXd& g_l,
                      Eigen::VectorXd& g_u) const = 0;

  virtual double objective(const Eigen::VectorXd& x) const = 0;
  virtual void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;
  virtual void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g) const = 0;
  /// Constraint Jacobian entries (row, col, value); duplicates are summed.
  virtual void jacobian(const Eigen::VectorXd& x, std::vector<Triplet>& out) const = 0;
  /// Lower triangle of obj_factor * Hess f + sum_i lambda_i Hess g_i.
  virtual void hessian(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& lambda,
                       std::vector<Triplet>& out) const = 0;
};

struct Options {
  double tol = 1e-8;             // scaled KKT error for convergence
  double acceptable_tol = 1e-6;  // accepted if the iteration limit is hit
  double constraint_tol = 1e-8;  // max |residual| of the constraints at exit
  int max_iterations = 500;
  double mu_init = 0.1;
  double bound_push = 1e-2;

  bool operator==(const Options&) const = default;
};

enum class Status { kSolved, kAcceptable, kMaxIterations, kLineSearchFailed, kNumericalFailure };

const char* to_string(Status s);

struct Result {
  Status status = Status::kNumericalFailure;
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;  // constraint multipliers, Lagrangian f + lambda^T g
  double objective = 0.0;
  double stationarity = 0.0;    // scaled dual infeasibility
  double infeasibility = 0.0;   // max constraint or bound violation
  double complementarity = 0.0;
  int iterations = 0;

  bool ok() const { return status == Status::kSolved || status == Status::kAcceptable; }
};

Result solve(const Problem& problem, const Eigen::VectorXd& x0, const Options& options = {});

}  // namespace rdmm::nlp
