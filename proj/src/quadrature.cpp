#include "betamix/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "betamix/error.hpp"

namespace betamix {

GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw DomainError("Gauss-Hermite rule needs at least one node");
  GaussHermiteRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    // Standard asymptotic starting guesses for the largest roots, then
    // extrapolation from the previously found roots.
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * rule.nodes[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * rule.nodes[1];
    else
      z = 2.0 * z - rule.nodes[i - 2];
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    rule.nodes[i] = z;
    rule.nodes[n - 1 - i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  if (n % 2 == 1) rule.nodes[m - 1] = 0.0;
  // Newton produced roots in descending order; flip to ascending.
  std::reverse(rule.nodes.begin(), rule.nodes.end());
  std::reverse(rule.weights.begin(), rule.weights.end());
  rule.log_weights.resize(n);
  for (int i = 0; i < n; ++i) rule.log_weights[i] = std::log(rule.weights[i]);
  return rule;
}

double radical_inverse(std::uint64_t index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

std::vector<double> halton_point(std::uint64_t index, int dim) {
  static constexpr std::array<unsigned, 16> primes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (dim < 1 || dim > static_cast<int>(primes.size())) throw DomainError("Halton dimension out of range");
  std::vector<double> u(dim);
  for (int d = 0; d < dim; ++d) u[d] = radical_inverse(index, primes[d]);
  return u;
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

}  // namespace betamix
