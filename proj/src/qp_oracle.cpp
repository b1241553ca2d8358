// Reference solver for the per-interval dispatch QP.  Intervals decouple, so
// each one is solved exactly by enumerating which agents sit at a bound and
// solving the resulting 2x2 price system.  Exponential in the agent count;
// meant for validation, not production.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "rdmm/dispatch.hpp"
#include "rdmm/errors.hpp"

namespace rdmm::dispatch {
namespace {

constexpr std::size_t kMaxOracleAgents = 12;

enum class Status { kFree = 0, kLower = 1, kUpper = 2 };

// g . lambda <= h
struct HalfPlane {
  Eigen::Vector2d g;
  double h;
};

struct IntervalSolution {
  std::vector<double> y;
  Eigen::Vector2d lambda;
};

bool satisfies(const std::vector<HalfPlane>& planes, const Eigen::Vector2d& lam, double tol) {
  for (const auto& p : planes)
    if (p.g.dot(lam) > p.h + tol * (1.0 + std::abs(p.h))) return false;
  return true;
}

// Minimum-norm point of an intersection of half-planes in the price plane.
std::optional<Eigen::Vector2d> min_norm_point(const std::vector<HalfPlane>& planes, double tol) {
  std::vector<Eigen::Vector2d> candidates{Eigen::Vector2d::Zero()};
  for (const auto& p : planes) {
    const double nn = p.g.squaredNorm();
    if (nn > 0.0) candidates.push_back(p.g * (p.h / nn));
  }
  for (std::size_t i = 0; i < planes.size(); ++i) {
    for (std::size_t j = i + 1; j < planes.size(); ++j) {
      Eigen::Matrix2d a;
      a.row(0) = planes[i].g.transpose();
      a.row(1) = planes[j].g.transpose();
      const double det = a.determinant();
      if (std::abs(det) <= 1e-14 * a.squaredNorm()) continue;
      candidates.push_back(a.inverse() * Eigen::Vector2d(planes[i].h, planes[j].h));
    }
  }
  std::optional<Eigen::Vector2d> best;
  for (const auto& c : candidates)
    if (satisfies(planes, c, tol) && (!best || c.norm() < best->norm())) best = c;
  return best;
}

std::optional<IntervalSolution> try_assignment(std::span<const DispatchableAgent> agents,
                                               std::size_t k, const std::vector<Status>& st,
                                               const Eigen::Vector2d& fixed_short) {
  const std::size_t n = agents.size();
  Eigen::Matrix2d hmat = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = fixed_short;
  std::vector<double> y(n, 0.0);
  std::vector<HalfPlane> planes;
  double scale = fixed_short.cwiseAbs().maxCoeff();

  for (std::size_t i = 0; i < n; ++i) {
    const auto& ag = agents[i];
    const Eigen::Vector2d d(ag.d_e[k], ag.d_th[k]);
    switch (st[i]) {
      case Status::kFree:
        hmat += d * d.transpose() / ag.c[k];
        rhs += d * (ag.b[k] / ag.c[k]);
        break;
      case Status::kLower:
        y[i] = ag.y_min[k];
        rhs -= d * y[i];
        // Marginal cost at the lower bound must not be below the price.
        planes.push_back({d, ag.b[k] + ag.c[k] * y[i]});
        break;
      case Status::kUpper:
        y[i] = ag.y_max[k];
        rhs -= d * y[i];
        planes.push_back({-d, -(ag.b[k] + ag.c[k] * y[i])});
        break;
    }
    scale = std::max(scale, std::abs(ag.y_max[k]) * d.cwiseAbs().maxCoeff());
  }
  const double cons_tol = 1e-9 * (1.0 + scale);
  const double price_tol = 1e-10;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(hmat);
  const Eigen::Vector2d ev = eig.eigenvalues();  // ascending
  const Eigen::Matrix2d vecs = eig.eigenvectors();
  const double top = std::max(ev(1), 0.0);
  const double rank_tol = 1e-12 * std::max(top, std::numeric_limits<double>::min());

  Eigen::Vector2d lam;
  if (top > 0.0 && ev(0) > rank_tol) {
    lam = hmat.ldlt().solve(rhs);
  } else if (top > 0.0) {
    const Eigen::Vector2d u = vecs.col(1);
    const Eigen::Vector2d nul = vecs.col(0);
    // Singular system: the imbalance must not have a component along the null
    // direction (nobody can respond to it).
    if (std::abs(nul.dot(rhs)) > cons_tol) return std::nullopt;
    const Eigen::Vector2d lam0 = u * (u.dot(rhs) / ev(1));
    double tlo = -std::numeric_limits<double>::infinity();
    double thi = std::numeric_limits<double>::infinity();
    for (const auto& p : planes) {
      const double gn = p.g.dot(nul);
      const double slack = p.h - p.g.dot(lam0);
      if (std::abs(gn) <= 1e-14 * p.g.norm()) {
        if (slack < -price_tol * (1.0 + std::abs(p.h))) return std::nullopt;
      } else if (gn > 0.0) {
        thi = std::min(thi, slack / gn);
      } else {
        tlo = std::max(tlo, slack / gn);
      }
    }
    if (tlo > thi + price_tol) return std::nullopt;
    lam = lam0 + std::clamp(0.0, tlo, std::max(tlo, thi)) * nul;
  } else {
    if (rhs.cwiseAbs().maxCoeff() > cons_tol) return std::nullopt;
    auto p = min_norm_point(planes, price_tol);
    if (!p) return std::nullopt;
    lam = *p;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& ag = agents[i];
    const Eigen::Vector2d d(ag.d_e[k], ag.d_th[k]);
    const double ytol = 1e-9 * (1.0 + std::abs(ag.y_min[k]) + std::abs(ag.y_max[k]));
    const double gtol = price_tol * (1.0 + std::abs(ag.b[k]) + lam.cwiseAbs().maxCoeff());
    const double marginal = d.dot(lam);
    switch (st[i]) {
      case Status::kFree:
        y[i] = (marginal - ag.b[k]) / ag.c[k];
        if (y[i] < ag.y_min[k] - ytol || y[i] > ag.y_max[k] + ytol) return std::nullopt;
        y[i] = std::clamp(y[i], ag.y_min[k], ag.y_max[k]);
        break;
      case Status::kLower:
        if (ag.b[k] + ag.c[k] * y[i] - marginal < -gtol) return std::nullopt;
        break;
      case Status::kUpper:
        if (marginal - ag.b[k] - ag.c[k] * y[i] < -gtol) return std::nullopt;
        break;
    }
  }
  return IntervalSolution{std::move(y), lam};
}

std::optional<IntervalSolution> solve_interval(std::span<const DispatchableAgent> agents,
                                               const NetLoads& loads, std::size_t k) {
  const std::size_t n = agents.size();
  const Eigen::Vector2d short_energy(-loads.interval_hours * loads.electric_kw[k],
                                     -loads.interval_hours * loads.thermal_kw[k]);
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= 3;
  std::vector<Status> st(n);
  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t rem = code;
    for (std::size_t i = 0; i < n; ++i) {
      st[i] = static_cast<Status>(rem % 3);
      rem /= 3;
    }
    if (auto sol = try_assignment(agents, k, st, short_energy)) return sol;
  }
  return std::nullopt;
}

}  // namespace

DispatchResult qp_oracle(std::span<const DispatchableAgent> agents, const NetLoads& loads) {
  const std::size_t m = loads.size();
  if (m == 0) throw InvalidArgument("dispatch: empty horizon");
  loads.validate(m);
  if (agents.size() > kMaxOracleAgents)
    throw InvalidArgument(fmt::format("qp oracle supports at most {} agents, got {}",
                                      kMaxOracleAgents, agents.size()));
  for (const auto& ag : agents) {
    ag.validate(m);
    for (std::size_t k = 0; k < m; ++k)
      if (!(ag.c[k] > 0.0))
        throw InvalidArgument(fmt::format("qp oracle needs strictly convex costs (agent {})", ag.id));
  }

  DispatchResult r;
  r.y.assign(agents.size(), std::vector<double>(m, 0.0));
  r.mu_plus.assign(agents.size(), std::vector<double>(m, 0.0));
  r.mu_minus.assign(agents.size(), std::vector<double>(m, 0.0));
  r.lambda_e.assign(m, 0.0);
  r.lambda_th.assign(m, 0.0);

  std::vector<std::size_t> infeasible;
  for (std::size_t k = 0; k < m; ++k) {
    auto sol = solve_interval(agents, loads, k);
    if (!sol) {
      infeasible.push_back(k);
      continue;
    }
    r.lambda_e[k] = sol->lambda(0);
    r.lambda_th[k] = sol->lambda(1);
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto& ag = agents[i];
      const double y = sol->y[i];
      r.y[i][k] = y;
      const double g = ag.b[k] + ag.c[k] * y - ag.d_e[k] * r.lambda_e[k] - ag.d_th[k] * r.lambda_th[k];
      // Stationarity g + mu+ - mu- = 0 with only the active bound's multiplier.
      if (y >= ag.y_max[k] && g < 0.0) r.mu_plus[i][k] = -g;
      if (y <= ag.y_min[k] && g > 0.0) r.mu_minus[i][k] = g;
    }
  }
  if (!infeasible.empty())
    throw InfeasibleError(fmt::format("dispatch infeasible in interval(s) {}",
                                      fmt::join(infeasible, ", ")));
  std::tie(r.residual_e, r.residual_th) = balance_residuals(agents, loads, r.y);
  r.converged = true;
  return r;
}

}  // namespace rdmm::dispatch
