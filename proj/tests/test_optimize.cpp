#include <cmath>
#include <limits>

#include "doctest.h"
#include "qkbo/optimize.hpp"

using namespace qkbo;
using Eigen::VectorXd;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

double rosenbrock(const VectorXd& x, VectorXd* g) {
  double f = 0;
  if (g) g->setZero(x.size());
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i], b = 1 - x[i];
    f += 100 * a * a + b * b;
    if (g) {
      (*g)[i] += -400 * x[i] * a - 2 * b;
      (*g)[i + 1] += 200 * a;
    }
  }
  return f;
}

}  // namespace

TEST_CASE("unconstrained rosenbrock") {
  const VectorXd x0 = VectorXd::Constant(4, -1.2);
  LbfgsOptions o;
  o.max_iterations = 1000;
  const auto r = minimize_box(rosenbrock, x0, VectorXd::Constant(4, -kInf), VectorXd::Constant(4, kInf), o);
  CHECK((r.x - VectorXd::Ones(4)).norm() < 1e-5);
  CHECK(r.f < 1e-10);
}

TEST_CASE("active bounds") {
  // Minimum of (x-3)^2 + (y+2)^2 over [0,1]x[-1,1] sits at (1,-1).
  auto f = [](const VectorXd& x, VectorXd* g) {
    if (g) *g = 2 * (x - VectorXd((VectorXd(2) << 3, -2).finished()));
    return (x[0] - 3) * (x[0] - 3) + (x[1] + 2) * (x[1] + 2);
  };
  const auto r = minimize_box(f, VectorXd::Zero(2), (VectorXd(2) << 0, -1).finished(), (VectorXd(2) << 1, 1).finished());
  CHECK(std::abs(r.x[0] - 1) < 1e-12);
  CHECK(std::abs(r.x[1] + 1) < 1e-12);
  CHECK(r.converged);
}

TEST_CASE("start outside the box is projected") {
  auto f = [](const VectorXd& x, VectorXd* g) {
    if (g) *g = 2 * x;
    return x.squaredNorm();
  };
  const auto r = minimize_box(f, VectorXd::Constant(3, 5.0), VectorXd::Constant(3, 0.5), VectorXd::Constant(3, 2.0));
  CHECK((r.x - VectorXd::Constant(3, 0.5)).norm() < 1e-12);
}

TEST_CASE("ill-conditioned quadratic") {
  VectorXd d(5);
  d << 1, 10, 100, 1000, 1e4;
  auto f = [&](const VectorXd& x, VectorXd* g) {
    if (g) *g = d.cwiseProduct(x - VectorXd::Ones(5));
    return 0.5 * (x - VectorXd::Ones(5)).cwiseAbs2().dot(d);
  };
  const auto r = minimize_box(f, VectorXd::Zero(5), VectorXd::Constant(5, -kInf), VectorXd::Constant(5, kInf));
  CHECK((r.x - VectorXd::Ones(5)).norm() < 1e-6);
}

TEST_CASE("infinite objective values are rejected by the line search") {
  // Barrier at x >= 0.5; minimum of the smooth part would be at 0.
  auto f = [](const VectorXd& x, VectorXd* g) {
    if (x[0] < 0.5) {
      if (g) g->setZero(1);
      return kInf;
    }
    if (g) *g = 2 * x;
    return x[0] * x[0];
  };
  const auto r = minimize_box(f, VectorXd::Constant(1, 3.0), VectorXd::Constant(1, -10), VectorXd::Constant(1, 10));
  CHECK(std::isfinite(r.f));
  CHECK(r.x[0] >= 0.5);
  CHECK(r.f <= 9.0);
}
