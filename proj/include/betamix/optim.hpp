#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace betamix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Scalar objective to be minimized. May throw; see safe_value.
using Objective = std::function<double(const VectorXd&)>;

/// Evaluates f, mapping library exceptions and non-finite values to +inf.
double safe_value(const Objective& f, const VectorXd& x);

/// Central differences with step rel_step * max(1, |x_k|); falls back to a
/// one-sided difference when one side is not finite.
VectorXd numerical_gradient(const Objective& f, const VectorXd& x, double rel_step = 1e-6);

/// Central second differences with per-coordinate steps max(min_step, rel_step*|x_k|),
/// symmetrized. Throws NumericalError naming the offending entry.
MatrixXd numerical_hessian(const Objective& f, const VectorXd& x, double min_step = 1e-4, double rel_step = 1e-4);

/// Eigenvalue-clamped projection of a symmetric matrix onto the SPD cone.
MatrixXd nearest_spd(const MatrixXd& m, double rel_floor = 1e-10);

struct BfgsOptions {
  double grad_tol = 1e-5;
  double rel_tol = 1e-10;
  int max_iter = 500;
  double gradient_step = 1e-6;
  /// Largest infinity-norm of a single step.
  double max_step = 2.0;
};

struct OptimResult {
  VectorXd x;
  double value = 0.0;
  VectorXd grad;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Quasi-Newton minimization with numerical gradients and Armijo backtracking.
OptimResult bfgs_minimize(const Objective& f, VectorXd x0, const BfgsOptions& options = {});

}  // namespace betamix
