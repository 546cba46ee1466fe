#include <cmath>
#include <numbers>

#include "betamix/error.hpp"
#include "betamix/quadrature.hpp"
#include "doctest.h"

using namespace betamix;

TEST_CASE("Gauss-Hermite rules integrate polynomials exactly") {
  for (int n : {1, 2, 5, 15, 21, 61}) {
    const auto rule = gauss_hermite(n);
    REQUIRE(rule.nodes.size() == static_cast<std::size_t>(n));
    for (int k = 0; 2 * k <= 2 * n - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += rule.weights[i] * std::pow(rule.nodes[i], 2 * k);
      const double exact = std::tgamma(k + 0.5);
      INFO("n=" << n << " k=" << k);
      CHECK(s == doctest::Approx(exact).epsilon(1e-11));
    }
    double odd = 0.0;
    for (int i = 0; i < n; ++i) odd += rule.weights[i] * std::pow(rule.nodes[i], 3);
    CHECK(std::abs(odd) < 1e-12);
    for (int i = 1; i < n; ++i) CHECK(rule.nodes[i] > rule.nodes[i - 1]);
    for (int i = 0; i < n; ++i) CHECK(rule.log_weights[i] == doctest::Approx(std::log(rule.weights[i])));
  }
  CHECK(gauss_hermite(1).nodes[0] == 0.0);
  CHECK(gauss_hermite(1).weights[0] == doctest::Approx(std::sqrt(std::numbers::pi)));
  CHECK(gauss_hermite(21).nodes[10] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK_THROWS_AS(gauss_hermite(0), DomainError);
}

TEST_CASE("van der Corput and Halton points") {
  CHECK(radical_inverse(1, 2) == 0.5);
  CHECK(radical_inverse(2, 2) == 0.25);
  CHECK(radical_inverse(3, 2) == 0.75);
  CHECK(radical_inverse(6, 2) == 0.375);
  CHECK(radical_inverse(1, 3) == doctest::Approx(1.0 / 3));
  CHECK(radical_inverse(5, 3) == doctest::Approx(7.0 / 9));
  const auto p = halton_point(4, 3);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == 0.125);
  CHECK(p[1] == doctest::Approx(4.0 / 9));
  CHECK(p[2] == doctest::Approx(4.0 / 5));
  double mean = 0.0;
  for (int i = 1; i <= 4096; ++i) mean += halton_point(i, 5)[4];
  CHECK(mean / 4096 == doctest::Approx(0.5).epsilon(1e-3));
  CHECK_THROWS_AS(halton_point(1, 0), DomainError);
  CHECK_THROWS_AS(halton_point(1, 17), DomainError);
}

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-12));
  for (double p : {0.001, 0.2, 0.6, 0.999}) {
    const double x = normal_quantile(p);
    CHECK(0.5 * std::erfc(-x / std::numbers::sqrt2) == doctest::Approx(p).epsilon(1e-13));
  }
}
