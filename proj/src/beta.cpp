#include "betamix/beta.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/policies/policy.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "betamix/error.hpp"

namespace betamix {

namespace {

using FastPolicy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2 pi) / 2
constexpr double kStirlingCutoff = 10.0;

double digamma(double x) { return boost::math::digamma(x, FastPolicy()); }
double trigamma(double x) { return boost::math::trigamma(x, FastPolicy()); }

bool in_unit_interval(double v) { return std::isfinite(v) && v > 0.0 && v < 1.0; }

double log_density_value(double y, double log_y, double log1m_y, double mu, double phi) {
  return detail::log_density_kernel(y, log_y, log1m_y, mu, detail::PhiConstants(phi));
}

}  // namespace

BetaParams::BetaParams(double mu, double phi) : mu_(mu), phi_(phi) {
  if (!in_unit_interval(mu)) throw DomainError("beta mean must lie in (0,1)");
  if (!std::isfinite(phi) || phi <= 0.0) throw DomainError("beta dispersion must be positive");
  if (!(shape_a() > 0.0) || !(shape_b() > 0.0))
    throw DomainError("beta shape parameters underflow to zero");
}

double stirling_remainder(double x) {
  // Bernoulli-number series; truncation error below 1e-16 for x >= 10.
  const double r = 1.0 / x;
  const double r2 = r * r;
  return r *
         (1.0 / 12.0 +
          r2 * (-1.0 / 360.0 +
                r2 * (1.0 / 1260.0 +
                      r2 * (-1.0 / 1680.0 +
                            r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360360.0 + r2 * (1.0 / 156.0)))))));
}

double log_density(double y, const BetaParams& p) {
  if (!in_unit_interval(y)) throw DomainError("beta response must lie in (0,1)");
  return log_density_value(y, std::log(y), std::log1p(-y), p.mu(), p.phi());
}

Moments moments(const BetaParams& p) {
  return {p.mu(), p.mu() * (1.0 - p.mu()) / (1.0 + p.phi())};
}

MuDerivatives dlog_density(double y, const BetaParams& p) {
  if (!in_unit_interval(y)) throw DomainError("beta response must lie in (0,1)");
  const auto t = detail::log_density_terms(y, std::log(y), std::log1p(-y), p.mu(), p.phi());
  return {t.d_mu, t.d2_mu};
}

namespace detail {

PhiConstants::PhiConstants(double phi_)
    : phi(phi_),
      log_phi(std::log(phi_)),
      lgamma_phi(std::lgamma(phi_)),
      stirling_phi(phi_ >= kStirlingCutoff ? stirling_remainder(phi_) : 0.0) {}

// lgamma(phi) - lgamma(a) - lgamma(b) + (a-1) log y + (b-1) log(1-y).
double log_density_kernel(double y, double log_y, double log1m_y, double mu, const PhiConstants& c) {
  const double a = mu * c.phi;
  const double b = (1.0 - mu) * c.phi;
  const bool large_a = a >= kStirlingCutoff;
  const bool large_b = b >= kStirlingCutoff;
  if (!large_a && !large_b)
    return c.lgamma_phi - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * log_y + (b - 1.0) * log1m_y;
  // With a + b = phi the (x - 1/2) log x - x parts of the Stirling expansions
  // collapse to the terms below. Far from the mean the ratios come straight
  // from the logs.
  const double log_mu = std::log(mu);
  const double log1m_mu = std::log1p(-mu);
  const double ry = (y - mu) / mu;
  const double r1my = (mu - y) / (1.0 - mu);
  const double log_ratio_y = ry > -0.5 ? std::log1p(ry) : log_y - log_mu;
  const double log_ratio_1my = r1my > -0.5 ? std::log1p(r1my) : log1m_y - log1m_mu;
  if (large_a && large_b) {
    const double corr = c.stirling_phi - stirling_remainder(a) - stirling_remainder(b);
    return 0.5 * c.log_phi - kHalfLog2Pi + a * log_ratio_y + b * log_ratio_1my + 0.5 * (log_mu + log1m_mu) -
           log_y - log1m_y + corr;
  }
  if (large_b)
    return a * (c.log_phi - 1.0) - std::lgamma(a) + (a - 1.0) * log_y + b * log_ratio_1my + 0.5 * log1m_mu -
           log1m_y + c.stirling_phi - stirling_remainder(b);
  return b * (c.log_phi - 1.0) - std::lgamma(b) + (b - 1.0) * log1m_y + a * log_ratio_y + 0.5 * log_mu - log_y +
         c.stirling_phi - stirling_remainder(a);
}

double log_density_unchecked(double y, double mu, double phi) {
  return log_density_value(y, std::log(y), std::log1p(-y), mu, phi);
}

DensityTerms log_density_terms(double y, double log_y, double log1m_y, double mu, double phi) {
  return log_density_terms(y, log_y, log1m_y, mu, PhiConstants(phi));
}

DensityTerms log_density_terms(double y, double log_y, double log1m_y, double mu, const PhiConstants& c) {
  const double phi = c.phi;
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  DensityTerms t;
  t.value = log_density_kernel(y, log_y, log1m_y, mu, c);
  t.d_mu = phi * (log_y - log1m_y - digamma(a) + digamma(b));
  t.d2_mu = -phi * phi * (trigamma(a) + trigamma(b));
  return t;
}

}  // namespace detail

std::string_view Link::name() const {
  switch (tag_) {
    case LinkKind::Logit: return "logit";
    case LinkKind::Probit: return "probit";
    case LinkKind::Cloglog: return "cloglog";
    case LinkKind::Cauchit: return "cauchit";
  }
  return "logit";
}

Link Link::from_name(std::string_view name) {
  if (name == "logit") return Link(LinkKind::Logit);
  if (name == "probit") return Link(LinkKind::Probit);
  if (name == "cloglog") return Link(LinkKind::Cloglog);
  if (name == "cauchit") return Link(LinkKind::Cauchit);
  throw DomainError("unknown link '" + std::string(name) + "'");
}

double Link::apply(double mu) const {
  if (!in_unit_interval(mu)) throw DomainError("link argument must lie in (0,1)");
  switch (tag_) {
    case LinkKind::Logit: return std::log(mu) - std::log1p(-mu);
    case LinkKind::Probit: return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * mu);
    case LinkKind::Cloglog: return std::log(-std::log1p(-mu));
    case LinkKind::Cauchit: return std::tan(std::numbers::pi * (mu - 0.5));
  }
  return 0.0;
}

double Link::invert(double eta) const { return invert_with_derivatives(eta).mu; }

InverseLink Link::invert_with_derivatives(double eta) const {
  InverseLink r{};
  switch (tag_) {
    case LinkKind::Logit: {
      const double e = std::exp(-std::abs(eta));
      const double p = 1.0 / (1.0 + e);
      r.mu = eta >= 0 ? p : e * p;
      const double v = e * p * p;  // mu (1 - mu), computed without cancellation
      r.dmu = v;
      r.d2mu = v * (1.0 - 2.0 * r.mu);
      break;
    }
    case LinkKind::Probit: {
      constexpr double inv_sqrt2pi = 0.39894228040143267794;
      r.mu = 0.5 * std::erfc(-eta / std::numbers::sqrt2);
      r.dmu = inv_sqrt2pi * std::exp(-0.5 * eta * eta);
      r.d2mu = -eta * r.dmu;
      break;
    }
    case LinkKind::Cloglog: {
      const double ee = std::exp(eta);
      r.mu = -std::expm1(-ee);
      r.dmu = std::exp(eta - ee);
      r.d2mu = r.dmu * (1.0 - ee);
      break;
    }
    case LinkKind::Cauchit: {
      const double den = 1.0 + eta * eta;
      r.mu = 0.5 + std::atan(eta) / std::numbers::pi;
      r.dmu = 1.0 / (std::numbers::pi * den);
      r.d2mu = -2.0 * eta / (std::numbers::pi * den * den);
      break;
    }
  }
  r.mu = std::clamp(r.mu, kClamp, 1.0 - kClamp);
  return r;
}

}  // namespace betamix
