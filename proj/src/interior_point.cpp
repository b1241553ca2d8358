#include "rdmm/interior_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include "rdmm/errors.hpp"
#include "rdmm/log.hpp"

namespace rdmm::nlp {

const char* to_string(Status s) {
  switch (s) {
    case Status::kSolved: return "solved";
    case Status::kAcceptable: return "acceptable";
    case Status::kMaxIterations: return "iteration limit";
    case Status::kLineSearchFailed: return "line search failed";
    case Status::kNumericalFailure: return "numerical failure";
  }
  return "unknown";
}

namespace {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;

constexpr double kEta = 1e-4;            // Armijo constant
constexpr double kTauMin = 0.99;         // fraction-to-boundary floor
constexpr double kKappaSigma = 1e10;     // bound-multiplier safeguard
constexpr double kDeltaC = 1e-10;        // constant dual regularization
constexpr double kMinStep = 1e-14;

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

class Solver {
 public:
  Solver(const Problem& p, const Options& o) : p_(p), opt_(o) {
    n_ = p.num_variables();
    m_ = p.num_constraints();
    VectorXd xl(n_), xu(n_), gl(m_), gu(m_);
    p.bounds(xl, xu, gl, gu);
    slack_of_row_.assign(m_, -1);
    target_ = VectorXd::Zero(m_);
    int slacks = 0;
    for (int i = 0; i < m_; ++i) {
      if (gl[i] > gu[i]) throw InvalidArgument("nlp: constraint bounds cross");
      if (gl[i] == gu[i]) {
        target_[i] = gl[i];
      } else {
        slack_of_row_[i] = slacks++;
      }
    }
    nw_ = n_ + slacks;
    lw_.resize(nw_);
    uw_.resize(nw_);
    lw_.head(n_) = xl;
    uw_.head(n_) = xu;
    for (int i = 0; i < m_; ++i) {
      if (slack_of_row_[i] >= 0) {
        lw_[n_ + slack_of_row_[i]] = gl[i];
        uw_[n_ + slack_of_row_[i]] = gu[i];
      }
    }
    for (int i = 0; i < nw_; ++i) {
      if (lw_[i] > uw_[i]) throw InvalidArgument("nlp: variable bounds cross");
      has_l_.push_back(std::isfinite(lw_[i]));
      has_u_.push_back(std::isfinite(uw_[i]));
    }
  }

  Result run(const VectorXd& x0) {
    if (x0.size() != n_) throw InvalidArgument("nlp: initial point has the wrong size");
    Result res;
    w_.resize(nw_);
    w_.head(n_) = x0;
    for (int i = 0; i < n_; ++i) w_[i] = push_inside(i, x0[i]);
    VectorXd g(m_);
    p_.constraints(w_.head(n_), g);
    for (int i = 0; i < m_; ++i)
      if (slack_of_row_[i] >= 0) {
        const int k = n_ + slack_of_row_[i];
        w_[k] = push_inside(k, g[i]);
      }
    y_ = VectorXd::Zero(m_);
    zl_ = VectorXd::Zero(nw_);
    zu_ = VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_l_[i]) zl_[i] = 1.0;
      if (has_u_[i]) zu_[i] = 1.0;
    }
    mu_ = opt_.mu_init;

    if (!evaluate(w_, f_, g_)) {
      res.status = Status::kNumericalFailure;
      return finish(res, 0);
    }
    int iter = 0;
    for (; iter < opt_.max_iterations; ++iter) {
      refresh_derivatives();
      if (kkt_error(0.0) <= opt_.tol && inf_norm(h_) <= opt_.constraint_tol) {
        res.status = Status::kSolved;
        return finish(res, iter);
      }
      while (mu_ > opt_.tol / 10.0 && kkt_error(mu_) <= 10.0 * mu_) {
        mu_ = std::max(opt_.tol / 10.0, std::min(0.2 * mu_, std::pow(mu_, 1.5)));
      }
      if (!step()) {
        res.status = Status::kLineSearchFailed;
        if (acceptable()) res.status = Status::kAcceptable;
        return finish(res, iter);
      }
    }
    refresh_derivatives();
    res.status = acceptable() ? Status::kAcceptable : Status::kMaxIterations;
    if (kkt_error(0.0) <= opt_.tol && inf_norm(h_) <= opt_.constraint_tol) res.status = Status::kSolved;
    return finish(res, iter);
  }

 private:
  double push_inside(int i, double v) const {
    const double l = lw_[i], u = uw_[i];
    const double k = opt_.bound_push;
    if (has_l_[i] && has_u_[i]) {
      const double pl = std::min(k * std::max(1.0, std::abs(l)), 0.5 * k * (u - l));
      const double pu = std::min(k * std::max(1.0, std::abs(u)), 0.5 * k * (u - l));
      return std::clamp(v, l + pl, u - pu);
    }
    if (has_l_[i]) return std::max(v, l + k * std::max(1.0, std::abs(l)));
    if (has_u_[i]) return std::min(v, u - k * std::max(1.0, std::abs(u)));
    return v;
  }

  bool evaluate(const VectorXd& w, double& f, VectorXd& g) const {
    f = p_.objective(w.head(n_));
    g.resize(m_);
    p_.constraints(w.head(n_), g);
    return std::isfinite(f) && g.allFinite();
  }

  VectorXd residual(const VectorXd& w, const VectorXd& g) const {
    VectorXd h(m_);
    for (int i = 0; i < m_; ++i)
      h[i] = slack_of_row_[i] >= 0 ? g[i] - w[n_ + slack_of_row_[i]] : g[i] - target_[i];
    return h;
  }

  void refresh_derivatives() {
    h_ = residual(w_, g_);
    grad_f_ = VectorXd::Zero(nw_);
    VectorXd gx(n_);
    p_.gradient(w_.head(n_), gx);
    grad_f_.head(n_) = gx;
    std::vector<Triplet> jt;
    p_.jacobian(w_.head(n_), jt);
    for (int i = 0; i < m_; ++i)
      if (slack_of_row_[i] >= 0) jt.emplace_back(i, n_ + slack_of_row_[i], -1.0);
    jac_.resize(m_, nw_);
    jac_.setFromTriplets(jt.begin(), jt.end());
  }

  double dist_l(const VectorXd& w, int i) const { return w[i] - lw_[i]; }
  double dist_u(const VectorXd& w, int i) const { return uw_[i] - w[i]; }

  double barrier(const VectorXd& w, double f) const {
    double phi = f;
    for (int i = 0; i < nw_; ++i) {
      if (has_l_[i]) {
        const double d = dist_l(w, i);
        if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
        phi -= mu_ * std::log(d);
      }
      if (has_u_[i]) {
        const double d = dist_u(w, i);
        if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
        phi -= mu_ * std::log(d);
      }
    }
    return phi;
  }

  VectorXd barrier_gradient() const {
    VectorXd gp = grad_f_;
    for (int i = 0; i < nw_; ++i) {
      if (has_l_[i]) gp[i] -= mu_ / dist_l(w_, i);
      if (has_u_[i]) gp[i] += mu_ / dist_u(w_, i);
    }
    return gp;
  }

  double kkt_error(double mu) const {
    VectorXd grad_lag = grad_f_ + jac_.transpose() * y_ - zl_ + zu_;
    double comp = 0.0, zsum = zl_.lpNorm<1>() + zu_.lpNorm<1>();
    int nb = 0;
    for (int i = 0; i < nw_; ++i) {
      if (has_l_[i]) {
        comp = std::max(comp, std::abs(dist_l(w_, i) * zl_[i] - mu));
        ++nb;
      }
      if (has_u_[i]) {
        comp = std::max(comp, std::abs(dist_u(w_, i) * zu_[i] - mu));
        ++nb;
      }
    }
    constexpr double smax = 100.0;
    const double sd = std::max(smax, (y_.lpNorm<1>() + zsum) / std::max(1, m_ + nb)) / smax;
    const double sc = std::max(smax, zsum / std::max(1, nb)) / smax;
    return std::max({inf_norm(grad_lag) / sd, inf_norm(h_), comp / sc});
  }

  bool acceptable() const {
    return kkt_error(0.0) <= opt_.acceptable_tol && inf_norm(h_) <= opt_.constraint_tol;
  }

  // Assembles and factorizes the regularized Newton matrix with inertia correction.
  bool factorize(double min_delta) {
    std::vector<Triplet> hess;
    p_.hessian(w_.head(n_), 1.0, y_, hess);
    double delta = 0.0;
    if (min_delta > 0.0) delta = std::max(min_delta, last_delta_ > 0.0 ? last_delta_ / 3.0 : 0.0);
    for (int attempt = 0; attempt < 60; ++attempt) {
      std::vector<Triplet> t = hess;
      t.reserve(hess.size() + 2 * static_cast<std::size_t>(nw_ + m_) + jac_.nonZeros());
      for (int i = 0; i < nw_; ++i) {
        double s = delta;
        if (has_l_[i]) s += zl_[i] / dist_l(w_, i);
        if (has_u_[i]) s += zu_[i] / dist_u(w_, i);
        t.emplace_back(i, i, s);
      }
      for (int k = 0; k < jac_.outerSize(); ++k)
        for (SpMat::InnerIterator it(jac_, k); it; ++it) t.emplace_back(nw_ + it.row(), it.col(), it.value());
      for (int i = 0; i < m_; ++i) t.emplace_back(nw_ + i, nw_ + i, -kDeltaC);
      kkt_.resize(nw_ + m_, nw_ + m_);
      kkt_.setFromTriplets(t.begin(), t.end());
      ldlt_.compute(kkt_);
      if (ldlt_.info() == Eigen::Success) {
        const VectorXd& d = ldlt_.vectorD();
        int pos = 0, neg = 0;
        bool finite = true;
        for (int i = 0; i < d.size(); ++i) {
          if (!std::isfinite(d[i])) finite = false;
          if (d[i] > 0.0) ++pos;
          else if (d[i] < 0.0) ++neg;
        }
        if (finite && pos == nw_ && neg == m_) {
          if (delta > 0.0) last_delta_ = delta;
          return true;
        }
      }
      if (delta == 0.0) {
        delta = last_delta_ > 0.0 ? std::max(1e-20, last_delta_ / 3.0) : 1e-4;
      } else {
        delta *= last_delta_ > 0.0 ? 8.0 : 100.0;
      }
      if (delta > 1e40) return false;
    }
    return false;
  }

  struct Direction {
    VectorXd dw, dy;
  };

  Direction solve_newton(const VectorXd& top, const VectorXd& bottom) const {
    VectorXd rhs(nw_ + m_);
    rhs.head(nw_) = -top;
    rhs.tail(m_) = -bottom;
    VectorXd sol = ldlt_.solve(rhs);
    // One step of iterative refinement against the assembled matrix.
    const VectorXd full = kkt_.selfadjointView<Eigen::Lower>() * sol;
    sol += ldlt_.solve(rhs - full);
    return {sol.head(nw_), sol.tail(m_)};
  }

  double max_step(const VectorXd& w, const VectorXd& dw, double tau) const {
    double alpha = 1.0;
    for (int i = 0; i < nw_; ++i) {
      if (has_l_[i] && dw[i] < 0.0) alpha = std::min(alpha, -tau * dist_l(w, i) / dw[i]);
      if (has_u_[i] && dw[i] > 0.0) alpha = std::min(alpha, tau * dist_u(w, i) / dw[i]);
    }
    return alpha;
  }

  static double max_dual_step(const VectorXd& z, const VectorXd& dz, double tau) {
    double alpha = 1.0;
    for (int i = 0; i < z.size(); ++i)
      if (dz[i] < 0.0 && z[i] > 0.0) alpha = std::min(alpha, -tau * z[i] / dz[i]);
    return alpha;
  }

  bool step() {
    for (int retry = 0; retry < 4; ++retry) {
      const double forced = retry == 0 ? 0.0 : std::max(1e-4, 100.0 * last_delta_);
      if (!factorize(forced)) return false;
      if (try_line_search()) return true;
      log::debug("nlp: line search failed, increasing regularization (retry {})", retry + 1);
    }
    return false;
  }

  bool try_line_search() {
    const double tau = std::max(kTauMin, 1.0 - mu_);
    const VectorXd gphi = barrier_gradient();
    const VectorXd top = gphi + jac_.transpose() * y_;
    Direction d = solve_newton(top, h_);
    if (!d.dw.allFinite() || !d.dy.allFinite()) return false;

    // Penalty parameter keeping the Newton step a descent direction of the merit.
    const double h1 = h_.lpNorm<1>();
    const double gd = gphi.dot(d.dw);
    const VectorXd jdw = jac_ * d.dw;
    const double curv = std::max(0.0, -d.dw.dot(top) - jdw.dot(d.dy));
    if (h1 > 0.0) {
      const double need = (gd + 0.5 * curv) / (0.9 * h1);
      nu_ = std::max({nu_, need, inf_norm(y_ + d.dy) + 1e-6});
    }
    const double dphi = gd - nu_ * h1;
    const double phi0 = barrier(w_, f_) + nu_ * h1;

    double alpha = max_step(w_, d.dw, tau);
    bool first = true;
    while (alpha >= kMinStep) {
      VectorXd wt = w_ + alpha * d.dw;
      double ft;
      VectorXd gt;
      if (evaluate(wt, ft, gt)) {
        const VectorXd ht = residual(wt, gt);
        const double slack = 10.0 * std::numeric_limits<double>::epsilon() * std::abs(phi0);
        const double phit = barrier(wt, ft) + nu_ * ht.lpNorm<1>();
        if (phit <= phi0 + kEta * alpha * dphi + slack) {
          accept(wt, ft, gt, d, alpha, tau);
          return true;
        }
        if (first && ht.lpNorm<1>() >= h1) {
          // Second-order correction for the constraint curvature.
          Direction c = solve_newton(top, alpha * h_ + ht);
          if (c.dw.allFinite()) {
            const double ac = max_step(w_, c.dw, tau);
            VectorXd ws = w_ + ac * c.dw;
            double fs;
            VectorXd gs;
            if (evaluate(ws, fs, gs)) {
              const double phis = barrier(ws, fs) + nu_ * residual(ws, gs).lpNorm<1>();
              if (phis <= phi0 + kEta * alpha * dphi + slack) {
                accept(ws, fs, gs, c, ac, tau);
                return true;
              }
            }
          }
        }
      }
      first = false;
      alpha *= 0.5;
    }
    return false;
  }

  void accept(const VectorXd& wt, double ft, const VectorXd& gt, const Direction& d, double alpha,
              double tau) {
    VectorXd dzl = VectorXd::Zero(nw_), dzu = VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_l_[i]) {
        const double s = dist_l(w_, i);
        dzl[i] = mu_ / s - zl_[i] - zl_[i] / s * d.dw[i];
      }
      if (has_u_[i]) {
        const double s = dist_u(w_, i);
        dzu[i] = mu_ / s - zu_[i] + zu_[i] / s * d.dw[i];
      }
    }
    const double az = std::min(max_dual_step(zl_, dzl, tau), max_dual_step(zu_, dzu, tau));
    w_ = wt;
    f_ = ft;
    g_ = gt;
    y_ += alpha * d.dy;
    zl_ += az * dzl;
    zu_ += az * dzu;
    for (int i = 0; i < nw_; ++i) {
      if (has_l_[i]) {
        const double s = dist_l(w_, i);
        zl_[i] = std::clamp(zl_[i], mu_ / (kKappaSigma * s), kKappaSigma * mu_ / s);
      }
      if (has_u_[i]) {
        const double s = dist_u(w_, i);
        zu_[i] = std::clamp(zu_[i], mu_ / (kKappaSigma * s), kKappaSigma * mu_ / s);
      }
    }
  }

  Result& finish(Result& res, int iter) {
    res.x = w_.head(n_);
    res.lambda = y_;
    res.objective = f_;
    res.iterations = iter;
    if (jac_.rows() == m_ && jac_.cols() == nw_ && grad_f_.size() == nw_) {
      const VectorXd grad_lag = grad_f_ + jac_.transpose() * y_ - zl_ + zu_;
      res.stationarity = inf_norm(grad_lag);
      double comp = 0.0;
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i]) comp = std::max(comp, dist_l(w_, i) * zl_[i]);
        if (has_u_[i]) comp = std::max(comp, dist_u(w_, i) * zu_[i]);
      }
      res.complementarity = comp;
      res.infeasibility = inf_norm(h_);
    }
    return res;
  }

  const Problem& p_;
  Options opt_;
  int n_ = 0, m_ = 0, nw_ = 0;
  std::vector<int> slack_of_row_;
  VectorXd target_, lw_, uw_;
  std::vector<bool> has_l_, has_u_;

  VectorXd w_, y_, zl_, zu_;
  double mu_ = 0.1;
  double nu_ = 0.0;
  double last_delta_ = 0.0;
  double f_ = 0.0;
  VectorXd g_, h_, grad_f_;
  SpMat jac_, kkt_;
  Ldlt ldlt_;
};

}  // namespace

Result solve(const Problem& problem, const Eigen::VectorXd& x0, const Options& options) {
  Solver s(problem, options);
  return s.run(x0);
}

}  // namespace rdmm::nlp
