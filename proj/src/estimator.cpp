#include "betamix/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

#include "betamix/error.hpp"
#include "betamix/quadrature.hpp"

namespace betamix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

MatrixXd hessian_with_steps(const Objective& f, const VectorXd& x, const VectorXd& h) {
  // Reuse the generic routine through a rescaled objective: in u = x / h the
  // unit step corresponds to step h_k in coordinate k.
  const Objective scaled = [&](const VectorXd& u) { return f(u.cwiseProduct(h)); };
  const VectorXd u = x.cwiseQuotient(h);
  const MatrixXd hu = numerical_hessian(scaled, u, 1.0, 0.0);
  const VectorXd inv = h.cwiseInverse();
  return inv.asDiagonal() * hu * inv.asDiagonal();
}

bool is_spd(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

VectorXd std_errors_from(const MatrixXd& h) {
  Eigen::LLT<MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) return VectorXd::Constant(h.rows(), kNaN);
  const MatrixXd inv = llt.solve(MatrixXd::Identity(h.rows(), h.cols()));
  return inv.diagonal().cwiseMax(0.0).cwiseSqrt();
}

VectorXd reporting_steps(const ModelSpec& spec, const VectorXd& r, double scale) {
  VectorXd h(r.size());
  for (Eigen::Index k = 0; k < r.size(); ++k) h(k) = std::max(scale, scale * std::abs(r(k)));
  if (spec.cov == CovKind::InterceptSlope) {
    const auto k = static_cast<Eigen::Index>(spec.p() + 3);
    h(k) = std::min(h(k), 0.5 * (1.0 - std::abs(r(k))));
  }
  return h;
}

// Monotone cubic (Fritsch-Carlson) interpolant through (x_i, y_i), x ascending.
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    d_.assign(n, 0.0);
    if (n < 2) return;
    std::vector<double> h(n - 1), del(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      del[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    if (n == 2) {
      d_[0] = d_[1] = del[0];
      return;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (del[i - 1] * del[i] <= 0.0) continue;
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d_[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
    }
    d_[0] = end_slope(h[0], h[1], del[0], del[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
  }

  double operator()(double t) const {
    std::size_t i = 0;
    while (i + 2 < x_.size() && t > x_[i + 1]) ++i;
    const double h = x_[i + 1] - x_[i];
    const double s = (t - x_[i]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
  }

 private:
  static double end_slope(double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(d) > std::abs(3.0 * d0)) return 3.0 * d0;
    return d;
  }

  std::vector<double> x_, y_, d_;
};

// Crossing of the deviance with the cutoff along one side of the profile.
// `pos` are distances from the centre (ascending), `dev` the deviances.
std::optional<double> side_crossing(const std::vector<double>& pos, const std::vector<double>& dev, double cutoff) {
  std::size_t j = 1;
  while (j < pos.size() && dev[j] < cutoff) ++j;
  if (j == pos.size()) return std::nullopt;
  const Pchip spline(pos, dev);
  double lo = pos[j - 1], hi = pos[j];
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (spline(mid) < cutoff ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double to_reporting_coordinate(const ModelSpec& spec, std::size_t k, double v) {
  const std::size_t p = spec.p();
  if (k < p) return v;
  if (k == p) return std::exp(v);
  const bool is_rho = spec.cov == CovKind::InterceptSlope && k == p + 3;
  return is_rho ? std::tanh(v) : std::exp(-v);
}

}  // namespace

double chi2_quantile(double level, double df) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), level);
}

std::size_t FitResult::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DomainError("model has no parameter '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

ParamVector auto_init(const Dataset& data, const ModelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto p = static_cast<Eigen::Index>(spec.p());
  MatrixXd X(n, p);
  VectorXd gy(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = data.records[i];
    for (Eigen::Index k = 0; k < p; ++k) X(i, k) = r.x[spec.fixed[k]];
    gy(i) = spec.link.apply(std::clamp(r.y, 1e-6, 1.0 - 1e-6));
  }
  VectorXd beta = p > 0 ? VectorXd(X.completeOrthogonalDecomposition().solve(gy)) : VectorXd();
  VectorXd cov_raw = VectorXd::Constant(static_cast<Eigen::Index>(spec.n_cov_params()), std::log(0.1));
  if (spec.cov == CovKind::InterceptSlope) cov_raw(2) = 0.0;
  return ParamVector(std::move(beta), std::log(10.0), std::move(cov_raw));
}

FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options) {
  if (data.n() < spec.n_params() + 1)
    throw DataError("dataset has " + std::to_string(data.n()) + " observations; model needs at least " +
                    std::to_string(spec.n_params() + 1));
  MarginalLikelihood ml(data, spec, options.settings);
  if (spec.q_b() > 0 && ml.blocks().size() != data.n_groups()) throw DataError("empty group in dataset");

  FitResult out;
  out.spec = spec;
  out.names = spec.parameter_names();
  out.n_obs = data.n();
  out.n_groups = data.n_groups();
  out.data_fingerprint = data.fingerprint();
  out.settings = options.settings;

  const Objective negll = [&](const VectorXd& x) { return -ml(ParamVector::unpack(spec, x)); };
  VectorXd x0 = options.init ? options.init->pack() : auto_init(data, spec).pack();
  auto res = bfgs_minimize(negll, x0, options.bfgs);
  out.iterations = res.iterations;
  // A stop on the relative-change rule with a sizeable gradient gets one
  // fresh-Hessian restart.
  for (int restart = 0; restart < 2 && std::isfinite(res.value) &&
                        !(res.converged && res.grad.lpNorm<Eigen::Infinity>() < 1e-4);
       ++restart) {
    auto again = bfgs_minimize(negll, res.x, options.bfgs);
    out.iterations += again.iterations;
    if (again.value <= res.value) res = std::move(again);
    else break;
  }
  if (!std::isfinite(res.value)) throw NumericalError("marginal likelihood not finite at the starting point");
  // Strongly curved directions can leave a gradient above the bar once the
  // objective is flat to round-off; finish with Newton steps on the numerical
  // Hessian.
  for (int polish = 0; polish < 3 && res.grad.lpNorm<Eigen::Infinity>() >= 1e-4; ++polish) {
    MatrixXd h;
    try {
      h = numerical_hessian(negll, res.x);
    } catch (const NumericalError&) {
      break;
    }
    Eigen::LLT<MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) break;
    const VectorXd x = res.x - llt.solve(res.grad);
    const double v = negll(x);
    if (!std::isfinite(v) || v > res.value + 1e-10 * std::abs(res.value)) break;
    const VectorXd g = numerical_gradient(negll, x, options.bfgs.gradient_step);
    if (g.lpNorm<Eigen::Infinity>() >= res.grad.lpNorm<Eigen::Infinity>()) break;
    res.x = x;
    res.value = v;
    res.grad = g;
    res.converged = true;
    if (polish == 0) res.message = "Newton polish after " + res.message;
  }
  out.theta_hat = ParamVector::unpack(spec, res.x);
  out.loglik = -res.value;
  out.estimates = out.theta_hat.to_reporting(spec);
  out.grad_norm = res.grad.lpNorm<Eigen::Infinity>();
  out.converged = res.converged && out.grad_norm < 1e-4;
  out.message = res.message;

  const auto d = static_cast<Eigen::Index>(spec.n_params());
  out.hessian = MatrixXd::Constant(d, d, kNaN);
  out.hessian_unconstrained = MatrixXd::Constant(d, d, kNaN);
  out.std_errors = VectorXd::Constant(d, kNaN);
  out.std_errors_unconstrained = VectorXd::Constant(d, kNaN);
  if (!options.compute_hessian) return out;

  try {
    out.hessian_unconstrained = numerical_hessian(negll, res.x);
    MatrixXd hu = out.hessian_unconstrained;
    if (!is_spd(hu)) hu = nearest_spd(hu);
    out.std_errors_unconstrained = std_errors_from(hu);
  } catch (const NumericalError&) {
  }

  const Objective negll_reporting = [&](const VectorXd& r) {
    return -ml(ParamVector::from_reporting(spec, r));
  };
  const VectorXd r_hat = out.estimates;
  bool ok = false;
  for (double scale : {1e-4, 1e-5}) {
    try {
      MatrixXd h = hessian_with_steps(negll_reporting, r_hat, reporting_steps(spec, r_hat, scale));
      if (is_spd(h)) {
        out.hessian = h;
        out.hessian_adjusted = scale != 1e-4;
        ok = true;
        break;
      }
      out.hessian = h;
    } catch (const NumericalError&) {
    }
  }
  if (!ok) {
    out.hessian_adjusted = true;
    if (out.hessian.allFinite()) {
      out.hessian = nearest_spd(out.hessian);
    } else if (out.hessian_unconstrained.allFinite()) {
      // Change of variables from the unconstrained Hessian at the optimum.
      const VectorXd jinv = reporting_jacobian(spec, out.theta_hat).cwiseInverse();
      out.hessian = nearest_spd(jinv.asDiagonal() * out.hessian_unconstrained * jinv.asDiagonal());
    }
  }
  if (out.hessian.allFinite()) out.std_errors = std_errors_from(out.hessian);
  return out;
}

Interval wald_interval(const FitResult& fit, std::size_t param, double level) {
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double est = fit.estimates(static_cast<Eigen::Index>(param));
  const double se = fit.std_errors(static_cast<Eigen::Index>(param));
  return {est - z * se, est + z * se};
}

ProfileCurve profile_curve(const Objective& loglik, const VectorXd& x_hat, double loglik_max, std::size_t index,
                           double se, double level, const ProfileOptions& options) {
  if (!(se > 0.0) || !std::isfinite(se)) throw NumericalError("profile needs a positive finite standard error");
  const auto d = x_hat.size();
  const auto k = static_cast<Eigen::Index>(index);
  const int half = (options.points - 1) / 2;
  const double step = 2.0 * options.span_se * se / (options.points - 1);

  ProfileCurve curve;
  curve.cutoff = chi2_quantile(level);

  auto embed = [&](const VectorXd& rest, double v) {
    VectorXd x(d);
    x << rest.head(k), v, rest.tail(d - 1 - k);
    return x;
  };
  auto strip = [&](const VectorXd& x) {
    VectorXd rest(d - 1);
    rest << x.head(k), x.tail(d - 1 - k);
    return rest;
  };
  auto maximize_at = [&](double v, VectorXd& warm) {
    if (d == 1) return loglik(embed(VectorXd(), v));
    const Objective neg = [&](const VectorXd& rest) { return -loglik(embed(rest, v)); };
    auto res = bfgs_minimize(neg, warm, options.bfgs);
    if (std::isfinite(res.value)) warm = res.x;
    return -res.value;
  };

  const double centre = x_hat(k);
  VectorXd warm_centre = strip(x_hat);
  const double at_centre = maximize_at(centre, warm_centre);

  struct Side {
    std::vector<double> pos, value;
    bool open = false;
  };
  double best = std::max(loglik_max, at_centre);
  auto run_side = [&](double sign) {
    Side s;
    s.pos.push_back(0.0);
    s.value.push_back(at_centre);
    VectorXd warm = warm_centre;
    for (int j = 1; j <= half + options.max_extension; ++j) {
      const double v = maximize_at(centre + sign * j * step, warm);
      s.pos.push_back(j * step);
      s.value.push_back(v);
      best = std::max(best, v);
      if (j >= half && 2.0 * (best - v) >= curve.cutoff) break;
      if (j == half + options.max_extension) s.open = true;
    }
    return s;
  };
  const Side lower = run_side(-1.0);
  const Side upper = run_side(1.0);
  curve.loglik_max = best;

  for (std::size_t j = lower.pos.size(); j-- > 1;) {
    curve.grid.push_back(centre - lower.pos[j]);
    curve.profile.push_back(lower.value[j]);
  }
  for (std::size_t j = 0; j < upper.pos.size(); ++j) {
    curve.grid.push_back(centre + upper.pos[j]);
    curve.profile.push_back(upper.value[j]);
  }

  auto endpoint = [&](const Side& s, double sign, bool& open) {
    std::vector<double> dev(s.value.size());
    for (std::size_t j = 0; j < dev.size(); ++j) dev[j] = 2.0 * (best - s.value[j]);
    auto c = side_crossing(s.pos, dev, curve.cutoff);
    open = !c.has_value();
    return open ? sign * std::numeric_limits<double>::infinity() : centre + sign * *c;
  };
  curve.lower = endpoint(lower, -1.0, curve.lower_open);
  curve.upper = endpoint(upper, 1.0, curve.upper_open);
  return curve;
}

ProfileTrace profile_ci(const Dataset& data, const FitResult& fit, std::size_t param, double level,
                        const ProfileOptions& options) {
  const auto& spec = fit.spec;
  if (param >= spec.n_params()) throw DomainError("profile parameter index out of range");
  MarginalLikelihood ml(data, spec, fit.settings);
  const Objective loglik = [&](const VectorXd& x) {
    const double v = -safe_value([&](const VectorXd& y) { return -ml(ParamVector::unpack(spec, y)); }, x);
    return v;
  };
  double se = fit.std_errors_unconstrained(static_cast<Eigen::Index>(param));
  if (!(se > 0.0) || !std::isfinite(se)) {
    // Delta method from the reporting-scale standard error.
    const double j = reporting_jacobian(spec, fit.theta_hat)(static_cast<Eigen::Index>(param));
    se = std::abs(fit.std_errors(static_cast<Eigen::Index>(param)) / j);
  }
  ProfileTrace t;
  t.parameter = fit.names.at(param);
  t.index = param;
  t.level = level;
  t.curve = profile_curve(loglik, fit.theta_hat.pack(), fit.loglik, param, se, level, options);
  for (double v : t.curve.grid) t.grid_reporting.push_back(to_reporting_coordinate(spec, param, v));

  auto map_end = [&](double v, bool open) {
    if (!open) return to_reporting_coordinate(spec, param, v);
    return to_reporting_coordinate(spec, param, v);  // +-inf maps to the boundary of the range
  };
  double a = map_end(t.curve.lower, t.curve.lower_open);
  double b = map_end(t.curve.upper, t.curve.upper_open);
  bool a_open = t.curve.lower_open, b_open = t.curve.upper_open;
  if (a > b) {
    std::swap(a, b);
    std::swap(a_open, b_open);
  }
  t.lower = a;
  t.upper = b;
  t.lower_open = a_open;
  t.upper_open = b_open;
  return t;
}

CompareTable model_compare(const std::vector<FitResult>& fits) {
  CompareTable t;
  if (fits.empty()) return t;
  for (const auto& f : fits) {
    if (f.data_fingerprint != fits.front().data_fingerprint || f.n_obs != fits.front().n_obs)
      throw DataError("model '" + f.spec.name + "' was fitted to a different dataset");
    t.models.push_back(f.spec.name);
    t.loglik.push_back(f.loglik);
  }
  // Rows: coefficients, then phi, then covariance parameters.
  auto add = [&t](const std::string& n) {
    if (std::find(t.parameters.begin(), t.parameters.end(), n) == t.parameters.end()) t.parameters.push_back(n);
  };
  for (const auto& f : fits)
    for (const auto& n : f.spec.fixed_names) add(n);
  add("phi");
  for (const auto& f : fits)
    for (const auto& n : f.spec.cov_parameter_names()) add(n);
  t.estimates.assign(t.parameters.size(), std::vector<double>(fits.size(), kNaN));
  for (std::size_t m = 0; m < fits.size(); ++m)
    for (std::size_t k = 0; k < fits[m].names.size(); ++k) {
      const auto pos = std::find(t.parameters.begin(), t.parameters.end(), fits[m].names[k]) - t.parameters.begin();
      t.estimates[pos][m] = fits[m].estimates(static_cast<Eigen::Index>(k));
    }
  auto nested_in = [](const FitResult& a, const FitResult& b) {
    if (a.names.size() > b.names.size()) return false;
    for (const auto& n : a.names)
      if (std::find(b.names.begin(), b.names.end(), n) == b.names.end()) return false;
    return true;
  };
  for (std::size_t i = 0; i < fits.size(); ++i)
    for (std::size_t j = 0; j < fits.size(); ++j) {
      if (i == j || !nested_in(fits[i], fits[j])) continue;
      const int df = static_cast<int>(fits[j].names.size()) - static_cast<int>(fits[i].names.size());
      if (df == 0 && j < i) continue;  // identical parameter sets: report once
      LikelihoodRatio lr;
      lr.smaller = i;
      lr.larger = j;
      lr.statistic = 2.0 * (fits[j].loglik - fits[i].loglik);
      lr.df = df;
      lr.p_value = df > 0 ? boost::math::cdf(boost::math::complement(
                                boost::math::chi_squared_distribution<double>(df), std::max(0.0, lr.statistic)))
                          : kNaN;
      t.tests.push_back(lr);
    }
  return t;
}

}  // namespace betamix
