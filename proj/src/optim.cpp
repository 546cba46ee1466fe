#include "betamix/optim.hpp"

#include <cmath>
#include <limits>

#include "betamix/error.hpp"

namespace betamix {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double safe_value(const Objective& f, const VectorXd& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  } catch (const DomainError&) {
    return kInf;
  } catch (const NumericalError&) {
    return kInf;
  }
}

VectorXd numerical_gradient(const Objective& f, const VectorXd& x, double rel_step) {
  VectorXd g(x.size());
  VectorXd xp = x;
  const double f0 = safe_value(f, x);
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel_step * std::max(1.0, std::abs(x(k)));
    xp(k) = x(k) + h;
    const double fp = safe_value(f, xp);
    xp(k) = x(k) - h;
    const double fm = safe_value(f, xp);
    xp(k) = x(k);
    if (std::isfinite(fp) && std::isfinite(fm))
      g(k) = (fp - fm) / (2.0 * h);
    else if (std::isfinite(fp) && std::isfinite(f0))
      g(k) = (fp - f0) / h;
    else if (std::isfinite(fm) && std::isfinite(f0))
      g(k) = (f0 - fm) / h;
    else
      g(k) = std::numeric_limits<double>::quiet_NaN();
  }
  return g;
}

MatrixXd numerical_hessian(const Objective& f, const VectorXd& x, double min_step, double rel_step) {
  const auto d = x.size();
  VectorXd h(d);
  for (Eigen::Index k = 0; k < d; ++k) h(k) = std::max(min_step, rel_step * std::abs(x(k)));
  auto eval = [&](const VectorXd& at, Eigen::Index i, Eigen::Index j) {
    const double v = safe_value(f, at);
    if (!std::isfinite(v))
      throw NumericalError("Hessian entry (" + std::to_string(i) + "," + std::to_string(j) +
                           ") needs a non-finite objective value");
    return v;
  };
  const double f0 = eval(x, 0, 0);
  MatrixXd H(d, d);
  VectorXd xt = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    xt(i) = x(i) + h(i);
    const double fp = eval(xt, i, i);
    xt(i) = x(i) - h(i);
    const double fm = eval(xt, i, i);
    xt(i) = x(i);
    H(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      double acc = 0.0;
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          xt(i) = x(i) + si * h(i);
          xt(j) = x(j) + sj * h(j);
          acc += si * sj * eval(xt, i, j);
        }
      xt(i) = x(i);
      xt(j) = x(j);
      H(i, j) = H(j, i) = acc / (4.0 * h(i) * h(j));
    }
  }
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (!std::isfinite(H(i, j)))
        throw NumericalError("Hessian entry (" + std::to_string(i) + "," + std::to_string(j) + ") is not finite");
  return 0.5 * (H + H.transpose());
}

MatrixXd nearest_spd(const MatrixXd& m, double rel_floor) {
  const MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  VectorXd ev = es.eigenvalues();
  const double floor = rel_floor * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < ev.size(); ++k) ev(k) = std::max(ev(k), floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

OptimResult bfgs_minimize(const Objective& f, VectorXd x0, const BfgsOptions& options) {
  OptimResult r;
  const auto d = x0.size();
  r.x = std::move(x0);
  r.value = safe_value(f, r.x);
  if (!std::isfinite(r.value)) {
    r.message = "objective not finite at the starting point";
    return r;
  }
  r.grad = numerical_gradient(f, r.x, options.gradient_step);
  MatrixXd hinv = MatrixXd::Identity(d, d);
  bool identity = true;

  for (r.iterations = 0; r.iterations < options.max_iter; ++r.iterations) {
    if (!r.grad.allFinite()) {
      r.message = "gradient not finite";
      return r;
    }
    if (r.grad.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      r.converged = true;
      r.message = "gradient tolerance reached";
      return r;
    }
    VectorXd dir = -hinv * r.grad;
    double slope = r.grad.dot(dir);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      identity = true;
      dir = -r.grad;
      slope = r.grad.dot(dir);
    }
    const double len = dir.lpNorm<Eigen::Infinity>();
    if (len > options.max_step) {
      dir *= options.max_step / len;
      slope *= options.max_step / len;
    }
    double t = 1.0;
    double f_new = kInf;
    VectorXd x_new;
    bool accepted = false;
    for (int k = 0; k < 50; ++k, t *= 0.5) {
      x_new = r.x + t * dir;
      f_new = safe_value(f, x_new);
      if (f_new <= r.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!identity) {
        hinv.setIdentity();
        identity = true;
        continue;
      }
      r.message = "line search failed";
      return r;
    }
    const VectorXd g_new = numerical_gradient(f, x_new, options.gradient_step);
    const VectorXd s = x_new - r.x;
    const VectorXd y = g_new - r.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (identity) {
        hinv *= sy / y.squaredNorm();
        identity = false;
      }
      const double rho = 1.0 / sy;
      const MatrixXd v = MatrixXd::Identity(d, d) - rho * s * y.transpose();
      hinv = v * hinv * v.transpose() + rho * s * s.transpose();
    }
    const double change = std::abs(r.value - f_new);
    r.x = x_new;
    r.value = f_new;
    r.grad = g_new;
    if (change < options.rel_tol * std::max(1.0, std::abs(f_new)) && t == 1.0) {
      r.converged = true;
      r.message = "relative objective change below tolerance";
      ++r.iterations;
      return r;
    }
  }
  r.message = "iteration limit reached";
  return r;
}

}  // namespace betamix
