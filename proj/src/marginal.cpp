#include "betamix/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "betamix/error.hpp"
#include "betamix/quadrature.hpp"

namespace betamix {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;
constexpr double kGradTol = 1e-8;
constexpr double kDecrementTol = 1e-13;
constexpr int kMaxNewton = 50;

double log_sum_exp(const std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

// h(b) for one group at a fixed theta.
class Integrand {
 public:
  Integrand(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, const CovFactor& cov)
      : block_(block), spec_(spec), phi_(theta.phi()), cov_(cov) {
    eta_fixed_ = block.X * theta.beta();
    const auto q = static_cast<double>(spec.q_b());
    prior_const_ = -0.5 * q * kLog2Pi - 0.5 * cov.log_det;
  }

  Eigen::Index dim() const { return block_.Z.cols(); }

  double value(const VectorXd& b) const {
    double s = 0.0;
    const VectorXd eta = eta_fixed_ + block_.Z * b;
    for (Eigen::Index j = 0; j < block_.size(); ++j) {
      const double mu = spec_.link.invert(eta(j));
      s += detail::log_density_kernel(block_.y(j), block_.log_y(j), block_.log1m_y(j), mu, phi_);
    }
    return s + log_prior(b);
  }

  double derivatives(const VectorXd& b, VectorXd& grad, MatrixXd& neg_hess) const {
    const auto q = dim();
    grad = -cov_.precision * b;
    neg_hess = cov_.precision;
    double s = 0.0;
    const VectorXd eta = eta_fixed_ + block_.Z * b;
    for (Eigen::Index j = 0; j < block_.size(); ++j) {
      const auto inv = spec_.link.invert_with_derivatives(eta(j));
      const auto t = detail::log_density_terms(block_.y(j), block_.log_y(j), block_.log1m_y(j), inv.mu, phi_);
      s += t.value;
      const double d1 = t.d_mu * inv.dmu;
      const double d2 = t.d2_mu * inv.dmu * inv.dmu + t.d_mu * inv.d2mu;
      for (Eigen::Index r = 0; r < q; ++r) {
        const double zr = block_.Z(j, r);
        if (zr == 0.0) continue;
        grad(r) += d1 * zr;
        for (Eigen::Index c = 0; c < q; ++c) neg_hess(r, c) -= d2 * zr * block_.Z(j, c);
      }
    }
    return s + log_prior(b);
  }

 private:
  double log_prior(const VectorXd& b) const {
    if (b.size() == 0) return 0.0;
    return prior_const_ - 0.5 * b.dot(cov_.precision * b);
  }

  const GroupBlock& block_;
  const ModelSpec& spec_;
  detail::PhiConstants phi_;
  const CovFactor& cov_;
  VectorXd eta_fixed_;
  double prior_const_ = 0.0;
};

// Cholesky of an SPD matrix, escalating a diagonal ridge on failure.
std::optional<Eigen::LLT<MatrixXd>> ridge_cholesky(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const auto q = m.rows();
  for (double ridge = 1e-8; ridge <= 1e-2 * (1 + 1e-12); ridge *= 10.0) {
    llt.compute(m + ridge * MatrixXd::Identity(q, q));
    if (llt.info() == Eigen::Success) return llt;
  }
  return std::nullopt;
}

InnerSolution solve_inner(const Integrand& f, const VectorXd* warm) {
  const auto q = f.dim();
  InnerSolution sol;
  VectorXd b = (warm != nullptr && warm->size() == q) ? *warm : VectorXd::Zero(q);
  VectorXd grad;
  MatrixXd neg_hess;
  double h = f.derivatives(b, grad, neg_hess);
  if (!std::isfinite(h)) {
    b.setZero();
    h = f.derivatives(b, grad, neg_hess);
    if (!std::isfinite(h)) throw NumericalError("joint log-density is not finite at b = 0");
  }
  int it = 0;
  bool stalled = false;
  for (; it < kMaxNewton && grad.lpNorm<Eigen::Infinity>() >= kGradTol; ++it) {
    VectorXd step;
    if (auto llt = ridge_cholesky(neg_hess)) {
      step = llt->solve(grad);
      if (grad.dot(step) < kDecrementTol) break;
    } else {
      // Indefinite curvature far from the mode: scaled ascent step.
      step = grad / std::max(1.0, neg_hess.diagonal().cwiseAbs().maxCoeff());
    }
    double t = 1.0;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      const VectorXd trial = b + t * step;
      const double h_trial = f.value(trial);
      if (std::isfinite(h_trial) && h_trial >= h) {
        b = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      stalled = true;
      break;
    }
    h = f.derivatives(b, grad, neg_hess);
  }
  {
    // Polish: one more Newton step so b_hat is accurate to round-off.
    Eigen::LLT<MatrixXd> polish(neg_hess);
    if (polish.info() == Eigen::Success) {
      const VectorXd trial = b + polish.solve(grad);
      VectorXd g2;
      MatrixXd h2;
      const double h_trial = f.derivatives(trial, g2, h2);
      if (std::isfinite(h_trial) && g2.lpNorm<Eigen::Infinity>() <= grad.lpNorm<Eigen::Infinity>()) {
        b = trial;
        h = h_trial;
        grad = std::move(g2);
        neg_hess = std::move(h2);
      }
    }
  }
  const double gnorm = grad.lpNorm<Eigen::Infinity>();
  auto llt = ridge_cholesky(neg_hess);
  if (!llt) throw NumericalError("curvature at the inner mode is not positive definite");
  if (gnorm >= kGradTol) {
    // Accept a mode whose Newton decrement is at round-off level.
    const double decrement = grad.dot(llt->solve(grad));
    if (!(decrement < (stalled ? 1e-9 : 1e-12)))
      throw NumericalError("inner Newton did not converge (gradient norm " + std::to_string(gnorm) +
                           (stalled ? ", line search stalled)" : ")"));
  }
  sol.b_hat = std::move(b);
  sol.h_at_mode = h;
  sol.iterations = it;
  Eigen::LLT<MatrixXd> direct(neg_hess);
  sol.neg_hessian = direct.info() == Eigen::Success ? neg_hess : MatrixXd(llt->reconstructedMatrix());
  return sol;
}

// A with A A^T = H^{-1}, plus log det H.
struct ModeScale {
  MatrixXd a;
  double log_det_h;
};

ModeScale mode_scale(const InnerSolution& mode) {
  Eigen::LLT<MatrixXd> llt(mode.neg_hessian);
  if (llt.info() != Eigen::Success) throw NumericalError("inner curvature is not positive definite");
  const MatrixXd l = llt.matrixL();
  const auto q = l.rows();
  ModeScale s;
  s.a = l.transpose().triangularView<Eigen::Upper>().solve(MatrixXd::Identity(q, q));
  s.log_det_h = 2.0 * l.diagonal().array().log().sum();
  return s;
}

double laplace_impl(const InnerSolution& mode) {
  if (mode.b_hat.size() == 0) return mode.h_at_mode;
  const auto q = static_cast<double>(mode.b_hat.size());
  return mode.h_at_mode + 0.5 * q * kLog2Pi - 0.5 * mode_scale(mode).log_det_h;
}

double aghq_impl(const Integrand& f, const InnerSolution& mode, const GaussHermiteRule& rule) {
  const auto q = static_cast<int>(mode.b_hat.size());
  if (q == 0) return mode.h_at_mode;
  const int n = static_cast<int>(rule.nodes.size());
  if (std::pow(static_cast<double>(n), q) > static_cast<double>(kMaxQuadratureNodes))
    throw DomainError("quadrature capacity exceeded: " + std::to_string(n) + "^" + std::to_string(q) + " nodes");
  const auto scale = mode_scale(mode);
  const double log_sqrt_pi = 0.5 * std::log(std::numbers::pi);
  const double prune_below = q > 2 ? std::log(1e-10) : -std::numeric_limits<double>::infinity();

  std::vector<int> idx(q, 0);
  std::vector<double> terms;
  VectorXd z(q);
  while (true) {
    double log_w = 0.0;
    for (int d = 0; d < q; ++d) {
      z(d) = rule.nodes[idx[d]];
      log_w += rule.log_weights[idx[d]];
    }
    if (log_w - q * log_sqrt_pi >= prune_below) {
      const VectorXd b = mode.b_hat + std::numbers::sqrt2 * (scale.a * z);
      terms.push_back(log_w + z.squaredNorm() + f.value(b));
    }
    int d = 0;
    while (d < q && ++idx[d] == n) idx[d++] = 0;
    if (d == q) break;
  }
  return 0.5 * q * std::numbers::ln2 - 0.5 * scale.log_det_h + log_sum_exp(terms);
}

double qmc_impl(const Integrand& f, const InnerSolution& mode, const std::vector<VectorXd>& points) {
  const auto q = mode.b_hat.size();
  if (q == 0) return mode.h_at_mode;
  const auto scale = mode_scale(mode);
  const double log_q_const = -0.5 * static_cast<double>(q) * kLog2Pi + 0.5 * scale.log_det_h;
  std::vector<double> terms;
  terms.reserve(points.size());
  for (const auto& z : points) {
    const VectorXd b = mode.b_hat + scale.a * z;
    terms.push_back(f.value(b) - (log_q_const - 0.5 * z.squaredNorm()));
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(points.size()));
}

std::vector<VectorXd> standard_normal_points(int n_points, int dim) {
  if (n_points < 16) throw DomainError("quasi-Monte Carlo needs at least 16 points");
  std::vector<VectorXd> pts(n_points, VectorXd(dim));
  for (int k = 0; k < n_points; ++k) {
    const auto u = halton_point(static_cast<std::uint64_t>(k) + 1, dim);
    for (int d = 0; d < dim; ++d) pts[k](d) = normal_quantile(u[d]);
  }
  return pts;
}

}  // namespace

std::vector<GroupBlock> make_blocks(const Dataset& data, const ModelSpec& spec) {
  const auto q = spec.q_b();
  std::vector<std::vector<const Record*>> by_group(data.n_groups());
  for (const auto& r : data.records) by_group.at(r.group).push_back(&r);
  std::vector<GroupBlock> blocks;
  std::vector<double> z(q);
  for (std::size_t g = 0; g < by_group.size(); ++g) {
    const auto& recs = by_group[g];
    if (recs.empty()) continue;
    GroupBlock blk;
    blk.group = static_cast<int>(g);
    const auto n = static_cast<Eigen::Index>(recs.size());
    blk.y.resize(n);
    blk.log_y.resize(n);
    blk.log1m_y.resize(n);
    blk.X.resize(n, static_cast<Eigen::Index>(spec.p()));
    blk.Z.resize(n, static_cast<Eigen::Index>(q));
    for (Eigen::Index j = 0; j < n; ++j) {
      const Record& r = *recs[j];
      blk.y(j) = r.y;
      blk.log_y(j) = std::log(r.y);
      blk.log1m_y(j) = std::log1p(-r.y);
      for (std::size_t k = 0; k < spec.p(); ++k) blk.X(j, static_cast<Eigen::Index>(k)) = r.x.at(spec.fixed[k]);
      spec.z_row(r, z);
      for (std::size_t k = 0; k < q; ++k) blk.Z(j, static_cast<Eigen::Index>(k)) = z[k];
    }
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

double conditional_loglik(const GroupBlock& block, const ModelSpec& spec, const VectorXd& beta, double phi,
                          const VectorXd& b) {
  const VectorXd eta = block.X * beta + block.Z * b;
  double s = 0.0;
  for (Eigen::Index j = 0; j < block.size(); ++j)
    s += log_density(block.y(j), BetaParams(spec.link.invert(eta(j)), phi));
  return s;
}

double joint_log_density(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta,
                         const VectorXd& b) {
  const auto cov = cov_matrix(theta.cov(spec));
  return Integrand(block, spec, theta, cov).value(b);
}

InnerSolution inner_mode(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta,
                         const VectorXd* warm_start) {
  const auto cov = cov_matrix(theta.cov(spec));
  return solve_inner(Integrand(block, spec, theta, cov), warm_start);
}

double laplace_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta) {
  return laplace_impl(inner_mode(block, spec, theta));
}

double laplace_marginal(const GroupBlock&, const ModelSpec&, const ParamVector&, const InnerSolution& mode) {
  return laplace_impl(mode);
}

double aghq_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, int nodes_per_dim) {
  return aghq_marginal(block, spec, theta, nodes_per_dim, inner_mode(block, spec, theta));
}

double aghq_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, int nodes_per_dim,
                     const InnerSolution& mode) {
  if (nodes_per_dim < 1 || nodes_per_dim % 2 == 0)
    throw DomainError("AGHQ needs an odd number of nodes per dimension");
  const auto cov = cov_matrix(theta.cov(spec));
  return aghq_impl(Integrand(block, spec, theta, cov), mode, gauss_hermite(nodes_per_dim));
}

double qmc_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, int n_points) {
  return qmc_marginal(block, spec, theta, n_points, inner_mode(block, spec, theta));
}

double qmc_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, int n_points,
                    const InnerSolution& mode) {
  const auto q = static_cast<int>(spec.q_b());
  if (q == 0) return mode.h_at_mode;
  const auto cov = cov_matrix(theta.cov(spec));
  return qmc_impl(Integrand(block, spec, theta, cov), mode, standard_normal_points(n_points, q));
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Laplace: return "laplace";
    case Method::AGHQ: return "aghq";
    case Method::QMC: return "qmc";
  }
  return "laplace";
}

Method method_from_name(std::string_view name) {
  if (name == "laplace") return Method::Laplace;
  if (name == "aghq") return Method::AGHQ;
  if (name == "qmc") return Method::QMC;
  throw DomainError("unknown integration method '" + std::string(name) + "'");
}

MarginalLikelihood::MarginalLikelihood(const Dataset& data, ModelSpec spec, IntegrationSettings settings)
    : spec_(std::move(spec)), settings_(settings) {
  blocks_ = make_blocks(data, spec_);
  for (const auto& b : blocks_) {
    group_labels_.push_back(data.group_labels.at(b.group));
    n_obs_ += static_cast<std::size_t>(b.size());
  }
  warm_.assign(blocks_.size(), std::nullopt);
  if (settings_.method == Method::AGHQ && (settings_.nodes < 1 || settings_.nodes % 2 == 0))
    throw DomainError("AGHQ needs an odd number of nodes per dimension");
  if (settings_.method == Method::QMC && settings_.qmc_points < 16)
    throw DomainError("quasi-Monte Carlo needs at least 16 points");
  if (spec_.q_b() > 0 && settings_.method == Method::AGHQ) rule_ = gauss_hermite(settings_.nodes);
  if (spec_.q_b() > 0 && settings_.method == Method::QMC)
    qmc_points_ = standard_normal_points(settings_.qmc_points, static_cast<int>(spec_.q_b()));
}

void MarginalLikelihood::reset_warm_starts() { warm_.assign(blocks_.size(), std::nullopt); }

double MarginalLikelihood::group_value(std::size_t g, const ParamVector& theta, const VectorXd* warm,
                                       VectorXd* mode_out) const {
  const auto& block = blocks_[g];
  if (spec_.q_b() == 0) return conditional_loglik(block, spec_, theta.beta(), theta.phi(), VectorXd());
  const auto cov = cov_matrix(theta.cov(spec_));
  const Integrand f(block, spec_, theta, cov);
  const auto mode = solve_inner(f, warm);
  if (mode_out != nullptr) *mode_out = mode.b_hat;
  switch (settings_.method) {
    case Method::Laplace:
      return laplace_impl(mode);
    case Method::AGHQ:
      return aghq_impl(f, mode, rule_);
    case Method::QMC:
      return qmc_impl(f, mode, qmc_points_);
  }
  return 0.0;
}

std::vector<double> MarginalLikelihood::contributions(const ParamVector& theta, bool use_warm_start) {
  const auto n = static_cast<long>(blocks_.size());
  std::vector<double> out(blocks_.size(), 0.0);
  std::vector<std::string> errors(blocks_.size());
  std::vector<VectorXd> modes(blocks_.size());
#pragma omp parallel for schedule(dynamic)
  for (long g = 0; g < n; ++g) {
    try {
      const VectorXd* warm = (use_warm_start && warm_[g]) ? &*warm_[g] : nullptr;
      out[g] = group_value(static_cast<std::size_t>(g), theta, warm, &modes[g]);
    } catch (const std::exception& e) {
      errors[g] = e.what();
    }
  }
  for (std::size_t g = 0; g < errors.size(); ++g)
    if (!errors[g].empty()) throw NumericalError("group '" + group_labels_[g] + "': " + errors[g]);
  if (use_warm_start && spec_.q_b() > 0)
    for (std::size_t g = 0; g < modes.size(); ++g) warm_[g] = std::move(modes[g]);
  return out;
}

std::vector<double> MarginalLikelihood::contributions_serial(const ParamVector& theta) const {
  std::vector<double> out(blocks_.size(), 0.0);
  for (std::size_t g = 0; g < blocks_.size(); ++g) {
    try {
      out[g] = group_value(g, theta, nullptr, nullptr);
    } catch (const std::exception& e) {
      throw NumericalError("group '" + group_labels_[g] + "': " + e.what());
    }
  }
  return out;
}

double MarginalLikelihood::operator()(const ParamVector& theta) {
  double s = 0.0;
  for (double v : contributions(theta, true)) s += v;
  return s;
}

double marginal_loglik(const Dataset& data, const ModelSpec& spec, const ParamVector& theta,
                       const IntegrationSettings& settings) {
  MarginalLikelihood ml(data, spec, settings);
  double s = 0.0;
  for (double v : ml.contributions(theta, false)) s += v;
  return s;
}

double marginal_loglik_serial(const Dataset& data, const ModelSpec& spec, const ParamVector& theta,
                              const IntegrationSettings& settings) {
  const MarginalLikelihood ml(data, spec, settings);
  double s = 0.0;
  for (double v : ml.contributions_serial(theta)) s += v;
  return s;
}

}  // namespace betamix
