#include <cmath>

#include "doctest.h"
#include "rdmm/errors.hpp"
#include "rdmm/interior_point.hpp"

using Eigen::VectorXd;
using rdmm::nlp::Triplet;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Hock-Schittkowski problem 71.
class Hs071 : public rdmm::nlp::Problem {
 public:
  int num_variables() const override { return 4; }
  int num_constraints() const override { return 2; }
  void bounds(VectorXd& xl, VectorXd& xu, VectorXd& gl, VectorXd& gu) const override {
    xl.setConstant(1.0);
    xu.setConstant(5.0);
    gl << 25.0, 40.0;
    gu << kInf, 40.0;
  }
  double objective(const VectorXd& x) const override {
    return x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2];
  }
  void gradient(const VectorXd& x, VectorXd& g) const override {
    g.resize(4);
    g[0] = x[3] * (2 * x[0] + x[1] + x[2]);
    g[1] = x[0] * x[3];
    g[2] = x[0] * x[3] + 1;
    g[3] = x[0] * (x[0] + x[1] + x[2]);
  }
  void constraints(const VectorXd& x, VectorXd& g) const override {
    g.resize(2);
    g[0] = x[0] * x[1] * x[2] * x[3];
    g[1] = x.squaredNorm();
  }
  void jacobian(const VectorXd& x, std::vector<Triplet>& t) const override {
    t.clear();
    t.emplace_back(0, 0, x[1] * x[2] * x[3]);
    t.emplace_back(0, 1, x[0] * x[2] * x[3]);
    t.emplace_back(0, 2, x[0] * x[1] * x[3]);
    t.emplace_back(0, 3, x[0] * x[1] * x[2]);
    for (int i = 0; i < 4; ++i) t.emplace_back(1, i, 2 * x[i]);
  }
  void hessian(const VectorXd& x, double s, const VectorXd& l, std::vector<Triplet>& t) const override {
    t.clear();
    t.emplace_back(0, 0, s * 2 * x[3] + l[1] * 2);
    t.emplace_back(1, 0, s * x[3] + l[0] * x[2] * x[3]);
    t.emplace_back(1, 1, l[1] * 2);
    t.emplace_back(2, 0, s * x[3] + l[0] * x[1] * x[3]);
    t.emplace_back(2, 1, l[0] * x[0] * x[3]);
    t.emplace_back(2, 2, l[1] * 2);
    t.emplace_back(3, 0, s * (2 * x[0] + x[1] + x[2]) + l[0] * x[1] * x[2]);
    t.emplace_back(3, 1, s * x[0] + l[0] * x[0] * x[2]);
    t.emplace_back(3, 2, s * x[0] + l[0] * x[0] * x[1]);
    t.emplace_back(3, 3, l[1] * 2);
  }
};

// Nonconvex: min -x^2 - y^2 on the unit box with x + y <= 1.5.
class ConcaveBox : public rdmm::nlp::Problem {
 public:
  int num_variables() const override { return 2; }
  int num_constraints() const override { return 1; }
  void bounds(VectorXd& xl, VectorXd& xu, VectorXd& gl, VectorXd& gu) const override {
    xl.setZero();
    xu.setOnes();
    gl[0] = -kInf;
    gu[0] = 1.5;
  }
  double objective(const VectorXd& x) const override { return -x.squaredNorm(); }
  void gradient(const VectorXd& x, VectorXd& g) const override { g = -2.0 * x; }
  void constraints(const VectorXd& x, VectorXd& g) const override {
    g.resize(1);
    g[0] = x.sum();
  }
  void jacobian(const VectorXd&, std::vector<Triplet>& t) const override {
    t = {{0, 0, 1.0}, {0, 1, 1.0}};
  }
  void hessian(const VectorXd&, double s, const VectorXd&, std::vector<Triplet>& t) const override {
    t = {{0, 0, -2.0 * s}, {1, 1, -2.0 * s}};
  }
};

}  // namespace

TEST_CASE("interior point solves hs071") {
  Hs071 p;
  VectorXd x0(4);
  x0 << 1, 5, 5, 1;
  const auto r = rdmm::nlp::solve(p, x0);
  REQUIRE(r.ok());
  CHECK(r.objective == doctest::Approx(17.0140173).epsilon(1e-7));
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x[1] == doctest::Approx(4.74299963).epsilon(1e-6));
  CHECK(r.x[2] == doctest::Approx(3.82114998).epsilon(1e-6));
  CHECK(r.x[3] == doctest::Approx(1.37940829).epsilon(1e-6));
  CHECK(r.infeasibility <= 1e-8);
  CHECK(r.iterations < 50);
}

TEST_CASE("interior point handles negative curvature") {
  ConcaveBox p;
  VectorXd x0(2);
  x0 << 0.4, 0.5;
  const auto r = rdmm::nlp::solve(p, x0);
  REQUIRE(r.ok());
  // Local minimizers are the vertices (1, 0.5) and (0.5, 1).
  CHECK(r.objective == doctest::Approx(-1.25).epsilon(1e-6));
  CHECK(r.x.sum() == doctest::Approx(1.5).epsilon(1e-7));
}

TEST_CASE("interior point rejects malformed input") {
  Hs071 p;
  CHECK_THROWS_AS(rdmm::nlp::solve(p, VectorXd::Zero(3)), rdmm::InvalidArgument);
}
