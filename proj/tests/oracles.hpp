#pragma once

// Reference implementations used by the tests. None of them calls into the
// library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

inline long double beta_log_density(long double y, long double mu, long double phi) {
  const long double a = mu * phi, b = (1.0L - mu) * phi;
  return std::lgammal(phi) - std::lgammal(a) - std::lgammal(b) + (a - 1.0L) * std::log(y) +
         (b - 1.0L) * std::log1p(-y);
}

inline double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

/// Maximizer of a unimodal f on [lo, hi].
inline double golden_max(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Dense grid search followed by golden-section refinement around the best cell.
inline double grid_max(const std::function<double(double)>& f, double lo, double hi, int n = 200001) {
  double best = lo, fbest = -std::numeric_limits<double>::infinity();
  const double h = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double x = lo + h * i;
    const double v = f(x);
    if (v > fbest) {
      fbest = v;
      best = x;
    }
  }
  return golden_max(f, best - h, best + h, 1e-14);
}

/// log of the integral of exp(h) over [lo, hi] by the composite trapezoid rule.
inline double log_trapezoid(const std::function<double(double)>& h, double lo, double hi, int n = 1000000) {
  const double step = (hi - lo) / n;
  std::vector<double> v(static_cast<std::size_t>(n) + 1);
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    v[i] = h(lo + step * i);
    m = std::max(m, v[i]);
  }
  long double s = 0.0L;
  for (int i = 0; i <= n; ++i) s += (i == 0 || i == n ? 0.5L : 1.0L) * std::exp(static_cast<long double>(v[i] - m));
  return m + static_cast<double>(std::log(s * step));
}

/// One group with a scalar random intercept: y_j ~ Beta(mu_j phi, (1 - mu_j) phi),
/// logit mu_j = eta_j + b, b ~ N(0, 1 / tau2).
struct InterceptGroup {
  std::vector<double> y;
  std::vector<double> eta;
  double phi = 1.0;
  double tau2 = 1.0;

  double h(double b) const {
    double s = 0.5 * std::log(tau2 / (2.0 * 3.14159265358979323846)) - 0.5 * tau2 * b * b;
    const double lg_phi = std::lgamma(phi);
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double mu = logistic(eta[j] + b);
      const double a = mu * phi, c = (1.0 - mu) * phi;
      s += lg_phi - std::lgamma(a) - std::lgamma(c) + (a - 1.0) * std::log(y[j]) + (c - 1.0) * std::log1p(-y[j]);
    }
    return s;
  }

  double mode() const {
    return grid_max([this](double b) { return h(b); }, -10.0, 10.0);
  }

  /// log of the integral of exp(h) over mode +- 10 sd, sd from a finite-difference curvature.
  double log_integral() const {
    const double m = mode();
    const double e = 1e-4;
    const double curv = -(h(m + e) - 2.0 * h(m) + h(m - e)) / (e * e);
    const double sd = 1.0 / std::sqrt(curv);
    return log_trapezoid([this](double b) { return h(b); }, m - 10.0 * sd, m + 10.0 * sd);
  }
};

/// Nelder-Mead minimization.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, double step = 0.1, int max_iter = 20000,
                                       double tol = 1e-13) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> s(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) s[i + 1][i] += step;
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i <= n; ++i) fv[i] = f(s[i]);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<std::size_t> idx(n + 1);
    for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> s2;
    std::vector<double> f2;
    for (auto i : idx) {
      s2.push_back(s[i]);
      f2.push_back(fv[i]);
    }
    s = s2;
    fv = f2;
    if (std::abs(fv[n] - fv[0]) <= tol * (std::abs(fv[0]) + 1e-300)) break;
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) c[k] += s[i][k] / n;
    auto along = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t k = 0; k < n; ++k) p[k] = c[k] + t * (s[n][k] - c[k]);
      return p;
    };
    auto xr = along(-1.0);
    const double fr = f(xr);
    if (fr < fv[0]) {
      auto xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        s[n] = xe;
        fv[n] = fe;
      } else {
        s[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      s[n] = xr;
      fv[n] = fr;
    } else {
      auto xc = fr < fv[n] ? along(-0.5) : along(0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fv[n])) {
        s[n] = xc;
        fv[n] = fc;
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t k = 0; k < n; ++k) s[i][k] = s[0][k] + 0.5 * (s[i][k] - s[0][k]);
          fv[i] = f(s[i]);
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  return s[best];
}

}  // namespace oracle
