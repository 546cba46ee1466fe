#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <vector>

#include "betamix/beta.hpp"
#include "betamix/error.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace betamix;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
  return v;
}

}  // namespace

TEST_CASE("log density matches the log-gamma oracle on a (y, mu, phi) grid") {
  const std::vector<double> ys{1e-6, 0.001, 0.02, 0.15, 0.37, 0.5, 0.73, 0.9, 0.999, 1 - 1e-6};
  const std::vector<double> mus{1e-4, 0.01, 0.2, 0.35, 0.5, 0.6, 0.81, 0.95, 0.999, 1 - 1e-4};
  const std::vector<double> phis{0.05, 0.7, 3.0, 14.0, 42.19, 94.19, 500.0, 2500.0, 12000.0, 5e4};
  int n = 0;
  double worst = 0.0;
  for (double y : ys)
    for (double mu : mus)
      for (double phi : phis) {
        const long double ref = oracle::beta_log_density(y, mu, phi);
        const double got = log_density(y, BetaParams(mu, phi));
        const double err = std::abs(static_cast<double>(got - ref)) / std::max(1.0, std::abs(static_cast<double>(ref)));
        worst = std::max(worst, err);
        ++n;
      }
  CHECK(n == 1000);
  CHECK(worst < 1e-12);
}

TEST_CASE("density integrates to one") {
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double mu : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.77, 0.8, 0.9})
    for (double phi : {0.5, 0.8, 2.0, 5.0, 15.0, 50.0, 94.19, 500.0, 800.0}) {
      const BetaParams p(mu, phi);
      const BetaParams mirrored(1.0 - mu, phi);
      const double total = ts.integrate([&](double y) { return std::exp(log_density(y, p)); }, 0.0, 0.5) +
                           ts.integrate([&](double t) { return std::exp(log_density(t, mirrored)); }, 0.0, 0.5);
      INFO("mu=" << mu << " phi=" << phi);
      CHECK(std::abs(total - 1.0) < 1e-5);
    }
}

TEST_CASE("moments follow the mean/dispersion form") {
  const BetaParams p(0.3, 9.0);
  const auto m = moments(p);
  CHECK(m.mean == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(m.variance == doctest::Approx(0.3 * 0.7 / 10.0).epsilon(1e-14));
  boost::math::quadrature::tanh_sinh<double> ts;
  const double e2 = ts.integrate([&](double y) { return y * y * std::exp(log_density(y, p)); }, 0.0, 1.0);
  CHECK(e2 - 0.09 == doctest::Approx(m.variance).epsilon(1e-8));
  CHECK(p.shape_a() == doctest::Approx(2.7));
  CHECK(p.shape_b() == doctest::Approx(6.3));
}

TEST_CASE("trapezoid moments match moments()") {
  for (double mu : {0.2, 0.55, 0.8})
    for (double phi : {5.0, 50.0}) {
      const BetaParams p(mu, phi);
      const int n = 1000000;
      long double m0 = 0, m1 = 0, m2 = 0;
      for (int i = 1; i < n; ++i) {
        const double y = static_cast<double>(i) / n;
        const long double f = std::exp(log_density(y, p));
        m0 += f;
        m1 += f * y;
        m2 += f * y * y;
      }
      m0 /= n;
      m1 /= n;
      m2 /= n;
      const auto m = moments(p);
      CHECK(std::abs(static_cast<double>(m0) - 1.0) < 1e-5);
      CHECK(std::abs(static_cast<double>(m1) - m.mean) < 1e-4);
      CHECK(std::abs(static_cast<double>(m2 - m1 * m1) - m.variance) < 1e-4);
    }
}

TEST_CASE("mu derivatives agree with central differences") {
  for (double y : {0.05, 0.4, 0.83})
    for (double mu : {0.1, 0.45, 0.9})
      for (double phi : {3.0, 60.0, 4000.0}) {
        const auto d = dlog_density(y, BetaParams(mu, phi));
        const double h = 1e-6;
        const double fp = log_density(y, BetaParams(mu + h, phi));
        const double fm = log_density(y, BetaParams(mu - h, phi));
        const double f0 = log_density(y, BetaParams(mu, phi));
        const double d1 = (fp - fm) / (2 * h);
        CHECK(std::abs(d.d_mu - d1) <= 1e-5 * std::max(1.0, std::abs(d1)));
        const auto dp = dlog_density(y, BetaParams(mu + h, phi));
        const auto dm = dlog_density(y, BetaParams(mu - h, phi));
        const double d2 = (dp.d_mu - dm.d_mu) / (2 * h);
        CHECK(std::abs(d.d2_mu - d2) <= 1e-5 * std::max(1.0, std::abs(d2)));
        (void)f0;
      }
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS_AS(BetaParams(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(BetaParams(1.0, 1.0), DomainError);
  CHECK_THROWS_AS(BetaParams(0.5, 0.0), DomainError);
  CHECK_THROWS_AS(BetaParams(0.5, -2.0), DomainError);
  CHECK_THROWS_AS(BetaParams(std::nan(""), 1.0), DomainError);
  CHECK_THROWS_AS(BetaParams(0.5, INFINITY), DomainError);
  CHECK_THROWS_AS(log_density(0.0, BetaParams(0.5, 2.0)), DomainError);
  CHECK_THROWS_AS(log_density(1.2, BetaParams(0.5, 2.0)), DomainError);
}

TEST_CASE("symmetry: f(y | mu) = f(1 - y | 1 - mu)") {
  for (double y : linspace(0.01, 0.99, 9))
    CHECK(log_density(y, BetaParams(0.3, 25.0)) ==
          doctest::Approx(log_density(1.0 - y, BetaParams(0.7, 25.0))).epsilon(1e-12));
}

TEST_CASE("Stirling remainder matches lgamma") {
  for (double x : {10.0, 12.5, 20.0, 40.0}) {
    const long double ref = std::lgammal(x) - ((x - 0.5L) * std::log(static_cast<long double>(x)) - x +
                                               0.5L * std::log(2.0L * 3.14159265358979323846264338L));
    CHECK(std::abs(stirling_remainder(x) - static_cast<double>(ref)) < 1e-15);
  }
  for (double x : {1e3, 1e5, 1e8}) {
    const double series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x * x);
    CHECK(stirling_remainder(x) == doctest::Approx(series).epsilon(1e-15));
  }
}

TEST_CASE("links invert and differentiate consistently") {
  for (auto kind : {LinkKind::Logit, LinkKind::Probit, LinkKind::Cloglog, LinkKind::Cauchit}) {
    const Link link(kind);
    CHECK(Link::from_name(link.name()) == link);
    for (double mu : {0.01, 0.2, 0.5, 0.77, 0.99}) CHECK(link.invert(link.apply(mu)) == doctest::Approx(mu).epsilon(1e-12));
    for (double eta : {-3.0, -0.4, 0.0, 1.1, 2.5}) {
      const auto inv = link.invert_with_derivatives(eta);
      const double h = 1e-5;
      const double d1 = (link.invert(eta + h) - link.invert(eta - h)) / (2 * h);
      const double d2 = (link.invert_with_derivatives(eta + h).dmu - link.invert_with_derivatives(eta - h).dmu) / (2 * h);
      CHECK(inv.dmu == doctest::Approx(d1).epsilon(1e-7));
      CHECK(inv.d2mu == doctest::Approx(d2).epsilon(1e-6).scale(1e-3));
    }
    CHECK(link.invert(1e4) <= 1.0 - Link::kClamp);
    CHECK(link.invert(-1e4) >= Link::kClamp);
    CHECK_THROWS_AS(link.apply(1.0), DomainError);
  }
  CHECK(Link(LinkKind::Logit).apply(0.5) == 0.0);
  CHECK(Link(LinkKind::Logit).invert(0.0) == 0.5);
  CHECK(std::abs(Link(LinkKind::Logit).invert(1.15) - 0.7595) < 5e-4);
  CHECK(Link(LinkKind::Logit).invert(0.7) == doctest::Approx(oracle::logistic(0.7)).epsilon(1e-15));
  CHECK_THROWS_AS(Link::from_name("identity"), DomainError);
}
