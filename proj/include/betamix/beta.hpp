#pragma once

#include <string>
#include <string_view>

namespace betamix {

/// Beta distribution in mean/dispersion form: E(Y) = mu, V(Y) = mu(1-mu)/(1+phi).
class BetaParams {
 public:
  /// Throws DomainError unless 0 < mu < 1 and phi > 0 (both finite).
  BetaParams(double mu, double phi);

  double mu() const { return mu_; }
  double phi() const { return phi_; }
  /// Standard shape parameters a = mu*phi, b = (1-mu)*phi.
  double shape_a() const { return mu_ * phi_; }
  double shape_b() const { return (1.0 - mu_) * phi_; }

 private:
  double mu_;
  double phi_;
};

struct Moments {
  double mean;
  double variance;
};

struct MuDerivatives {
  double d_mu;
  double d2_mu;
};

/// log f(y | mu, phi), evaluated in log space. For large shape parameters the
/// gamma ratio is rewritten through Stirling remainders so that the result
/// keeps full relative precision at phi ~ 1e5.
double log_density(double y, const BetaParams& p);

Moments moments(const BetaParams& p);

/// First and second partial derivatives of log f with respect to mu.
MuDerivatives dlog_density(double y, const BetaParams& p);

/// Stirling-series remainder lgamma(x) - [(x-1/2)log x - x + log(2 pi)/2], x >= 10.
double stirling_remainder(double x);

namespace detail {

/// Unchecked kernel shared by the likelihood code: log y and log(1-y) are
/// precomputed by the caller. Returns the log-density and optionally the
/// mu-derivatives.
struct DensityTerms {
  double value;
  double d_mu;
  double d2_mu;
};

/// phi-dependent pieces of the density, hoisted out of per-record loops.
struct PhiConstants {
  explicit PhiConstants(double phi);
  double phi;
  double log_phi;
  double lgamma_phi;
  double stirling_phi;
};

double log_density_kernel(double y, double log_y, double log1m_y, double mu, const PhiConstants& c);
DensityTerms log_density_terms(double y, double log_y, double log1m_y, double mu, const PhiConstants& c);
double log_density_unchecked(double y, double mu, double phi);
DensityTerms log_density_terms(double y, double log_y, double log1m_y, double mu, double phi);

}  // namespace detail

enum class LinkKind { Logit, Probit, Cloglog, Cauchit };

/// Mean and its first two derivatives with respect to the linear predictor.
struct InverseLink {
  double mu;
  double dmu;
  double d2mu;
};

class Link {
 public:
  static constexpr double kClamp = 1e-12;

  constexpr Link() = default;
  constexpr explicit Link(LinkKind tag) : tag_(tag) {}

  LinkKind tag() const { return tag_; }
  std::string_view name() const;
  static Link from_name(std::string_view name);

  /// g(mu); throws DomainError when mu is not in (0,1).
  double apply(double mu) const;
  /// g^{-1}(eta), clamped to [kClamp, 1 - kClamp].
  double invert(double eta) const;
  InverseLink invert_with_derivatives(double eta) const;

  friend bool operator==(const Link&, const Link&) = default;

 private:
  LinkKind tag_ = LinkKind::Logit;
};

inline double link_apply(const Link& l, double mu) { return l.apply(mu); }
inline double link_invert(const Link& l, double eta) { return l.invert(eta); }

}  // namespace betamix
