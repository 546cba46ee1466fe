#include <cmath>

#include "betamix/error.hpp"
#include "betamix/optim.hpp"
#include "doctest.h"

using namespace betamix;

TEST_CASE("BFGS minimizes the Rosenbrock function") {
  const Objective rosen = [](const VectorXd& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  BfgsOptions o;
  o.max_iter = 2000;
  const auto r = bfgs_minimize(rosen, x0, o);
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.value < 1e-8);
}

TEST_CASE("BFGS survives infeasible regions") {
  const Objective f = [](const VectorXd& x) {
    if (x(0) <= 0.0) throw DomainError("outside");
    return x(0) - std::log(x(0)) + x(1) * x(1);
  };
  VectorXd x0(2);
  x0 << 3.0, 1.0;
  const auto r = bfgs_minimize(f, x0);
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(std::abs(r.x(1)) < 1e-5);
  CHECK(std::isinf(safe_value(f, -x0)));
}

TEST_CASE("finite-difference derivatives of a quadratic") {
  MatrixXd a(3, 3);
  a << 4, 1, 0.5, 1, 3, -0.2, 0.5, -0.2, 2;
  VectorXd c(3);
  c << 1, -2, 0.5;
  const Objective f = [&](const VectorXd& x) { return 0.5 * x.dot(a * x) + c.dot(x); };
  VectorXd x(3);
  x << 0.3, -1.1, 2.0;
  const VectorXd g = numerical_gradient(f, x);
  CHECK((g - (a * x + c)).norm() < 1e-6);
  const MatrixXd h = numerical_hessian(f, x);
  CHECK((h - a).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff() < 1e-6);
  CHECK((h - h.transpose()).norm() == 0.0);

  const Objective broken = [](const VectorXd& v) { return v(0) > 0.5 ? std::nan("") : v.squaredNorm(); };
  VectorXd at(2);
  at << 0.5, 0.0;
  CHECK_THROWS_AS(numerical_hessian(broken, at), NumericalError);
}

TEST_CASE("nearest SPD projection") {
  MatrixXd m(2, 2);
  m << 1.0, 2.0, 2.0, 1.0;
  const MatrixXd p = nearest_spd(m);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(p);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK((p - p.transpose()).norm() < 1e-14);
  MatrixXd spd(2, 2);
  spd << 2.0, 0.3, 0.3, 1.0;
  CHECK((nearest_spd(spd) - spd).norm() < 1e-12);
}
