#include "betamix/dataclone.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "betamix/error.hpp"
#include "betamix/estimator.hpp"
#include "betamix/marginal.hpp"

namespace betamix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLogHalf = -0.69314718055994530942;

double gamma_log_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// A move beta_k += delta, b -= delta * d (every clone group) that leaves all
// linear predictors unchanged because X_k = Z d on every record.
struct Shift {
  Eigen::Index beta;
  VectorXd d;
};

std::vector<Shift> find_shifts(const std::vector<GroupBlock>& blocks, const ModelSpec& spec) {
  const auto q = static_cast<Eigen::Index>(spec.q_b());
  std::vector<VectorXd> candidates;
  for (Eigen::Index r = 0; r < q; ++r) candidates.push_back(VectorXd::Unit(q, r));
  if (spec.cov == CovKind::Nested) {
    VectorXd all = VectorXd::Ones(q);
    if (spec.group_effect) all(0) = 0.0;
    candidates.push_back(all);
  }
  std::vector<Shift> out;
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(spec.p()); ++k) {
    for (const auto& d : candidates) {
      bool match = !blocks.empty();
      for (const auto& b : blocks) {
        if ((b.X.col(k) - b.Z * d).cwiseAbs().maxCoeff() != 0.0) {
          match = false;
          break;
        }
      }
      if (match) {
        out.push_back({k, d});
        break;
      }
    }
  }
  return out;
}

struct Context {
  const ModelSpec& spec;
  const Priors& priors;
  const SamplerSettings& settings;
  std::vector<GroupBlock> blocks;
  std::vector<Shift> shifts;
  ParamVector start;
  int K = 1;
  Eigen::Index G = 0;
  Eigen::Index q = 0;
  Eigen::Index p = 0;
  std::size_t n_obs = 0;
};

// Acceptance bookkeeping for one proposal block with an adaptive log-scale.
struct Block {
  std::string name;
  double log_scale = 0.0;
  double target = 0.44;
  long window_tries = 0;
  long window_accepts = 0;
  long tries = 0;
  long accepts = 0;

  double scale() const { return std::exp(log_scale); }
  void record(bool accepted, bool after_burnin) {
    ++window_tries;
    window_accepts += accepted ? 1 : 0;
    if (after_burnin) {
      ++tries;
      accepts += accepted ? 1 : 0;
    }
  }
  void adapt(int round) {
    if (window_tries == 0) return;
    const double rate = static_cast<double>(window_accepts) / static_cast<double>(window_tries);
    log_scale += 4.0 * (rate - target) / std::sqrt(1.0 + round);
    window_tries = window_accepts = 0;
  }
};

struct ChainOutput {
  MatrixXd draws_u;
  MatrixXd draws_r;
  std::vector<std::pair<std::string, std::pair<long, long>>> counts;
};

class Chain {
 public:
  Chain(const Context& ctx, int index) : ctx_(ctx), index_(index) {
    std::seed_seq seq{static_cast<std::uint32_t>(ctx.settings.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(ctx.settings.seed >> 32), static_cast<std::uint32_t>(index),
                      0x5eedu};
    rng_.seed(seq);
  }

  ChainOutput run() {
    initialize();
    setup_blocks();
    refresh_proposals();
    const auto& s = ctx_.settings;
    const auto d = static_cast<Eigen::Index>(ctx_.spec.n_params());
    const int kept = s.iters - s.burnin;
    ChainOutput out;
    out.draws_u.resize(kept, d);
    out.draws_r.resize(kept, d);
    int round = 0;
    for (int it = 0; it < s.iters; ++it) {
      const bool after = it >= s.burnin;
      sweep(after);
      if (!after && (it + 1) % s.adapt_every == 0) {
        for (auto& blk : b_blocks_) blk.adapt(round);
        beta_block_.adapt(round);
        phi_block_.adapt(round);
        for (auto& blk : cov_blocks_) blk.adapt(round);
        for (auto& blk : shift_blocks_) blk.adapt(round);
        ++round;
        if (it + 1 <= s.burnin / 2) refresh_proposals();
      }
      if (after) {
        const ParamVector th(beta_, u_, v_);
        out.draws_u.row(it - s.burnin) = th.pack().transpose();
        out.draws_r.row(it - s.burnin) = th.to_reporting(ctx_.spec).transpose();
      }
    }
    long bt = 0, ba = 0;
    for (const auto& blk : b_blocks_) {
      bt += blk.tries;
      ba += blk.accepts;
    }
    if (ctx_.q > 0) out.counts.push_back({"b", {ba, bt}});
    out.counts.push_back({beta_block_.name, {beta_block_.accepts, beta_block_.tries}});
    out.counts.push_back({phi_block_.name, {phi_block_.accepts, phi_block_.tries}});
    for (const auto& blk : cov_blocks_) out.counts.push_back({blk.name, {blk.accepts, blk.tries}});
    for (const auto& blk : shift_blocks_) out.counts.push_back({blk.name, {blk.accepts, blk.tries}});
    return out;
  }

 private:
  double normal() { return std_normal_(rng_); }
  VectorXd normal_vector(Eigen::Index n) {
    VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal();
    return z;
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  bool accept(double log_ratio) { return std::isfinite(log_ratio) && (log_ratio >= 0.0 || std::log(uniform()) < log_ratio); }

  Eigen::Index col(Eigen::Index g, int c) const { return static_cast<Eigen::Index>(c) * ctx_.G + g; }

  double group_ll(Eigen::Index g, const VectorXd& eta_fixed, const double* b, const detail::PhiConstants& pc) const {
    const auto& blk = ctx_.blocks[g];
    double s = 0.0;
    for (Eigen::Index j = 0; j < blk.size(); ++j) {
      double eta = eta_fixed(j);
      for (Eigen::Index r = 0; r < ctx_.q; ++r) eta += blk.Z(j, r) * b[r];
      const double mu = ctx_.spec.link.invert(eta);
      s += detail::log_density_kernel(blk.y(j), blk.log_y(j), blk.log1m_y(j), mu, pc);
    }
    return s;
  }

  double prior_b(const CovFactor& cov, const MatrixXd& S) const {
    if (ctx_.q == 0) return 0.0;
    const double n = static_cast<double>(ctx_.G * ctx_.K);
    return -0.5 * (cov.precision.cwiseProduct(S)).sum() - 0.5 * n * cov.log_det;
  }

  double prior_theta(const VectorXd& beta, double u, const VectorXd& v) const {
    return ctx_.priors.log_density(ctx_.spec, ParamVector(beta, u, v));
  }

  void compute_eta_fixed(const VectorXd& beta, std::vector<VectorXd>& eta) const {
    eta.resize(ctx_.blocks.size());
    for (std::size_t g = 0; g < ctx_.blocks.size(); ++g) eta[g] = ctx_.blocks[g].X * beta;
  }

  double all_ll(const std::vector<VectorXd>& eta, const detail::PhiConstants& pc, VectorXd& ll) const {
    ll.resize(ctx_.G * ctx_.K);
    for (int c = 0; c < ctx_.K; ++c)
      for (Eigen::Index g = 0; g < ctx_.G; ++g) ll(col(g, c)) = group_ll(g, eta[g], B_.col(col(g, c)).data(), pc);
    return ll.sum();
  }

  void recompute_s() { S_ = ctx_.q > 0 ? MatrixXd(B_ * B_.transpose()) : MatrixXd(); }

  double log_posterior() {
    compute_eta_fixed(beta_, eta_);
    pc_ = detail::PhiConstants(std::exp(u_));
    const double ll = all_ll(eta_, pc_, ll_);
    recompute_s();
    return ll + prior_b(cov_, S_) + prior_theta(beta_, u_, v_);
  }

  bool try_state(const ParamVector& th, bool modes) {
    beta_ = th.beta();
    u_ = th.log_phi();
    v_ = th.cov_raw();
    try {
      cov_ = cov_matrix(th.cov(ctx_.spec));
    } catch (const DomainError&) {
      return false;
    }
    B_ = MatrixXd::Zero(ctx_.q, ctx_.G * ctx_.K);
    if (modes && ctx_.q > 0) {
      for (Eigen::Index g = 0; g < ctx_.G; ++g) {
        VectorXd b = VectorXd::Zero(ctx_.q);
        try {
          b = inner_mode(ctx_.blocks[g], ctx_.spec, th).b_hat;
        } catch (const NumericalError&) {
        }
        for (int c = 0; c < ctx_.K; ++c) B_.col(col(g, c)) = b;
      }
    }
    if (!std::isfinite(std::exp(u_))) return false;
    return std::isfinite(log_posterior());
  }

  void initialize() {
    const ParamVector& s = ctx_.start;
    VectorXd beta = s.beta();
    for (Eigen::Index k = 0; k < beta.size(); ++k) beta(k) += 0.05 * normal();
    const double u = s.log_phi() + 0.2 * normal();
    VectorXd v = s.cov_raw();
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += 0.3 * normal();
    if (try_state(ParamVector(beta, u, v), true)) return;
    const auto& pr = ctx_.priors;
    for (int attempt = 0; attempt < 10; ++attempt) {
      VectorXd b(ctx_.p);
      for (Eigen::Index k = 0; k < ctx_.p; ++k) b(k) = pr.beta_mean + normal() / std::sqrt(pr.beta_precision);
      const double phi = std::gamma_distribution<double>(pr.phi_shape, 1.0 / pr.phi_rate)(rng_);
      VectorXd raw(static_cast<Eigen::Index>(ctx_.spec.n_cov_params()));
      const auto cov_names = ctx_.spec.cov_parameter_names();
      for (Eigen::Index k = 0; k < raw.size(); ++k) {
        if (cov_names[k] == "rho") {
          raw(k) = std::atanh(2.0 * uniform() - 1.0);
        } else {
          raw(k) = -std::log(std::gamma_distribution<double>(pr.tau2_shape, 1.0 / pr.tau2_rate)(rng_));
        }
      }
      if (try_state(ParamVector(b, std::log(phi), raw), false)) return;
    }
    throw NumericalError("log posterior not finite at the initial values or at 10 prior draws");
  }

  void setup_blocks() {
    const double gk = static_cast<double>(ctx_.G * ctx_.K);
    const double nk = static_cast<double>(ctx_.n_obs) * ctx_.K;
    beta_block_ = Block{"beta", std::log(2.38 / std::sqrt(std::max<double>(1.0, static_cast<double>(ctx_.p)))), 0.3};
    phi_block_ = Block{"phi", std::log(2.4 / std::sqrt(nk / 2.0)), 0.44};
    const auto names = ctx_.spec.cov_parameter_names();
    cov_blocks_.clear();
    for (const auto& n : names) {
      const double info = n == "rho" ? gk : gk / 2.0;
      cov_blocks_.push_back(Block{n, std::log(2.4 / std::sqrt(info)), 0.44});
    }
    shift_blocks_.clear();
    for (const auto& sh : ctx_.shifts)
      shift_blocks_.push_back(Block{"shift:" + ctx_.spec.fixed_names[sh.beta], std::log(2.4), 0.44});
    const double b_target = ctx_.q == 1 ? 0.44 : 0.3;
    b_blocks_.assign(ctx_.G, Block{"b", std::log(2.38 / std::sqrt(std::max<double>(1.0, ctx_.q))), b_target});
  }

  // Proposal shapes from the conditional curvature at the current state.
  void refresh_proposals() {
    const ParamVector th(beta_, u_, v_);
    b_chol_.assign(ctx_.G, MatrixXd());
    for (Eigen::Index g = 0; g < ctx_.G; ++g) {
      MatrixXd h = cov_.precision;
      try {
        VectorXd warm = B_.col(col(g, 0));
        h = inner_mode(ctx_.blocks[g], ctx_.spec, th, &warm).neg_hessian;
      } catch (const std::exception&) {
      }
      Eigen::LLT<MatrixXd> llt(h);
      if (llt.info() != Eigen::Success || ctx_.q == 0) {
        b_chol_[g] = MatrixXd::Identity(ctx_.q, ctx_.q);
        continue;
      }
      // Factor of h^{-1}: if h = L L^T then L^{-T} is one.
      b_chol_[g] = llt.matrixU().solve(MatrixXd::Identity(ctx_.q, ctx_.q));
    }
    MatrixXd info = ctx_.priors.beta_precision * MatrixXd::Identity(ctx_.p, ctx_.p);
    for (int c = 0; c < ctx_.K; ++c) {
      for (Eigen::Index g = 0; g < ctx_.G; ++g) {
        const auto& blk = ctx_.blocks[g];
        const auto b = B_.col(col(g, c));
        for (Eigen::Index j = 0; j < blk.size(); ++j) {
          double eta = eta_[g](j);
          for (Eigen::Index r = 0; r < ctx_.q; ++r) eta += blk.Z(j, r) * b(r);
          const auto inv = ctx_.spec.link.invert_with_derivatives(eta);
          const auto t = detail::log_density_terms(blk.y(j), blk.log_y(j), blk.log1m_y(j), inv.mu, pc_);
          const double w = -t.d2_mu * inv.dmu * inv.dmu;
          info.selfadjointView<Eigen::Lower>().rankUpdate(blk.X.row(j).transpose(), w);
        }
      }
    }
    info = info.selfadjointView<Eigen::Lower>();
    Eigen::LLT<MatrixXd> llt(info);
    beta_chol_ = llt.info() == Eigen::Success ? MatrixXd(llt.matrixU().solve(MatrixXd::Identity(ctx_.p, ctx_.p)))
                                              : MatrixXd(MatrixXd::Identity(ctx_.p, ctx_.p) * 0.01);
  }

  void sweep(bool after) {
    update_b(after);
    update_beta(after);
    update_phi(after);
    update_cov(after);
    update_shifts(after);
  }

  void update_b(bool after) {
    if (ctx_.q == 0) return;
    const MatrixXd& P = cov_.precision;
    for (Eigen::Index g = 0; g < ctx_.G; ++g) {
      auto& blk = b_blocks_[g];
      for (int c = 0; c < ctx_.K; ++c) {
        const Eigen::Index j = col(g, c);
        const VectorXd b = B_.col(j);
        const VectorXd prop = b + blk.scale() * (b_chol_[g] * normal_vector(ctx_.q));
        const double ll_new = group_ll(g, eta_[g], prop.data(), pc_);
        const double lr = ll_new - ll_(j) - 0.5 * (prop.dot(P * prop) - b.dot(P * b));
        const bool ok = accept(lr);
        if (ok) {
          B_.col(j) = prop;
          ll_(j) = ll_new;
        }
        blk.record(ok, after);
      }
    }
    recompute_s();
  }

  void update_beta(bool after) {
    const VectorXd prop = beta_ + beta_block_.scale() * (beta_chol_ * normal_vector(ctx_.p));
    std::vector<VectorXd> eta;
    compute_eta_fixed(prop, eta);
    VectorXd ll;
    const double lr = all_ll(eta, pc_, ll) - ll_.sum() + prior_theta(prop, u_, v_) - prior_theta(beta_, u_, v_);
    const bool ok = accept(lr);
    if (ok) {
      beta_ = prop;
      eta_ = std::move(eta);
      ll_ = std::move(ll);
    }
    beta_block_.record(ok, after);
  }

  void update_phi(bool after) {
    const double prop = u_ + phi_block_.scale() * normal();
    const detail::PhiConstants pc(std::exp(prop));
    VectorXd ll;
    const double lr = all_ll(eta_, pc, ll) - ll_.sum() + prior_theta(beta_, prop, v_) - prior_theta(beta_, u_, v_);
    const bool ok = std::isfinite(pc.phi) && accept(lr);
    if (ok) {
      u_ = prop;
      pc_ = pc;
      ll_ = std::move(ll);
    }
    phi_block_.record(ok, after);
  }

  void update_cov(bool after) {
    for (std::size_t k = 0; k < cov_blocks_.size(); ++k) {
      auto& blk = cov_blocks_[k];
      VectorXd prop = v_;
      prop(static_cast<Eigen::Index>(k)) += blk.scale() * normal();
      bool ok = false;
      try {
        const ParamVector th(beta_, u_, prop);
        CovFactor cov = cov_matrix(th.cov(ctx_.spec));
        const double lr = prior_b(cov, S_) - prior_b(cov_, S_) + prior_theta(beta_, u_, prop) -
                          prior_theta(beta_, u_, v_);
        ok = accept(lr);
        if (ok) {
          v_ = prop;
          cov_ = std::move(cov);
        }
      } catch (const DomainError&) {
        ok = false;
      }
      blk.record(ok, after);
    }
  }

  void update_shifts(bool after) {
    const double n = static_cast<double>(ctx_.G * ctx_.K);
    for (std::size_t k = 0; k < ctx_.shifts.size(); ++k) {
      const auto& sh = ctx_.shifts[k];
      auto& blk = shift_blocks_[k];
      const double spread = 1.0 / std::sqrt(n * sh.d.dot(cov_.precision * sh.d));
      const double delta = blk.scale() * spread * normal();
      const VectorXd m = B_.rowwise().sum();
      const MatrixXd S = S_ - delta * (sh.d * m.transpose() + m * sh.d.transpose()) +
                         n * delta * delta * sh.d * sh.d.transpose();
      VectorXd beta = beta_;
      beta(sh.beta) += delta;
      const double lr = prior_b(cov_, S) - prior_b(cov_, S_) + prior_theta(beta, u_, v_) - prior_theta(beta_, u_, v_);
      const bool ok = accept(lr);
      if (ok) {
        beta_ = beta;
        B_.colwise() -= delta * sh.d;
        S_ = S;
        compute_eta_fixed(beta_, eta_);
      }
      blk.record(ok, after);
    }
  }

  const Context& ctx_;
  int index_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> std_normal_;

  VectorXd beta_;
  double u_ = 0.0;
  VectorXd v_;
  MatrixXd B_;
  VectorXd ll_;
  std::vector<VectorXd> eta_;
  CovFactor cov_;
  detail::PhiConstants pc_{1.0};
  MatrixXd S_;

  Block beta_block_;
  Block phi_block_;
  std::vector<Block> cov_blocks_;
  std::vector<Block> shift_blocks_;
  std::vector<Block> b_blocks_;
  std::vector<MatrixXd> b_chol_;
  MatrixXd beta_chol_;
};

// Moment-based starting values: least-squares beta, phi from the residual
// variance on the response scale, variances from the spread of group-mean
// residuals on the link scale.
ParamVector moment_start(const Dataset& data, const ModelSpec& spec) {
  ParamVector init = auto_init(data, spec);
  const VectorXd& beta = init.beta();
  double sum_var = 0.0, sum_sq = 0.0;
  std::vector<double> resid_sum(data.n_groups(), 0.0);
  std::vector<double> resid_n(data.n_groups(), 0.0);
  for (const auto& r : data.records) {
    double eta = 0.0;
    for (std::size_t k = 0; k < spec.p(); ++k) eta += r.x[spec.fixed[k]] * beta(static_cast<Eigen::Index>(k));
    const double mu = spec.link.invert(eta);
    sum_var += mu * (1.0 - mu);
    sum_sq += (r.y - mu) * (r.y - mu);
    resid_sum[r.group] += spec.link.apply(std::clamp(r.y, 1e-6, 1.0 - 1e-6)) - eta;
    resid_n[r.group] += 1.0;
  }
  const double phi = std::clamp(sum_var / std::max(sum_sq, 1e-300) - 1.0, 1.0, 1e5);
  VectorXd raw = init.cov_raw();
  if (raw.size() > 0) {
    double m = 0.0, m2 = 0.0, cnt = 0.0;
    for (std::size_t g = 0; g < resid_sum.size(); ++g) {
      if (resid_n[g] == 0.0) continue;
      const double a = resid_sum[g] / resid_n[g];
      m += a;
      m2 += a * a;
      cnt += 1.0;
    }
    const double var = cnt > 1.0 ? (m2 - m * m / cnt) / (cnt - 1.0) : 0.1;
    const auto names = spec.cov_parameter_names();
    for (Eigen::Index k = 0; k < raw.size(); ++k) raw(k) = names[k] == "rho" ? 0.0 : std::log(std::max(var, 1e-3));
  }
  return ParamVector(beta, std::log(phi), raw);
}

VectorXd column_variances(const MatrixXd& m) {
  const auto n = m.rows();
  if (n < 2) return VectorXd::Zero(m.cols());
  const VectorXd mean = m.colwise().mean().transpose();
  VectorXd v(m.cols());
  for (Eigen::Index k = 0; k < m.cols(); ++k) v(k) = (m.col(k).array() - mean(k)).square().sum() / (n - 1.0);
  return v;
}

MatrixXd stack(const std::vector<MatrixXd>& chains) {
  Eigen::Index rows = 0;
  for (const auto& c : chains) rows += c.rows();
  MatrixXd all(rows, chains.empty() ? 0 : chains.front().cols());
  Eigen::Index at = 0;
  for (const auto& c : chains) {
    all.middleRows(at, c.rows()) = c;
    at += c.rows();
  }
  return all;
}

}  // namespace

double Priors::log_density(const ModelSpec& spec, const ParamVector& theta) const {
  double lp = 0.0;
  const auto& beta = theta.beta();
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    const double d = beta(k) - beta_mean;
    lp += 0.5 * std::log(beta_precision) - 0.5 * std::log(2.0 * M_PI) - 0.5 * beta_precision * d * d;
  }
  const double u = theta.log_phi();
  lp += gamma_log_pdf(std::exp(u), phi_shape, phi_rate) + u;
  const auto names = spec.cov_parameter_names();
  const auto& raw = theta.cov_raw();
  for (Eigen::Index k = 0; k < raw.size(); ++k) {
    if (names[k] == "rho") {
      const double t = std::tanh(raw(k));
      lp += kLogHalf + std::log1p(-t * t);
    } else {
      lp += gamma_log_pdf(std::exp(-raw(k)), tau2_shape, tau2_rate) - raw(k);
    }
  }
  return lp;
}

Dataset clone_dataset(const Dataset& data, int K) {
  if (K < 1) throw DomainError("clone count must be at least 1");
  Dataset out;
  out.schema = data.schema;
  out.covariate_names = data.covariate_names;
  out.subgroup_labels = data.subgroup_labels;
  const auto G = static_cast<int>(data.n_groups());
  for (int c = 0; c < K; ++c)
    for (const auto& label : data.group_labels) out.group_labels.push_back(label + "#" + std::to_string(c + 1));
  out.records.reserve(data.records.size() * static_cast<std::size_t>(K));
  for (int c = 0; c < K; ++c)
    for (const auto& r : data.records) {
      Record copy = r;
      copy.group = c * G + r.group;
      out.records.push_back(std::move(copy));
    }
  return out;
}

VectorXd gelman_rubin(const std::vector<MatrixXd>& chains) {
  if (chains.empty()) return {};
  const auto d = chains.front().cols();
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(chains.front().rows());
  if (chains.size() < 2 || n < 2) return VectorXd::Constant(d, kNaN);
  VectorXd out(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    std::vector<double> means;
    double w = 0.0;
    for (const auto& c : chains) {
      // Welford keeps constant chains exactly at zero variance.
      double mean = 0.0, m2 = 0.0;
      for (Eigen::Index i = 0; i < c.rows(); ++i) {
        const double delta = c(i, k) - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (c(i, k) - mean);
      }
      means.push_back(mean);
      w += m2 / (n - 1.0);
    }
    w /= m;
    double grand = 0.0;
    for (double x : means) grand += x;
    grand /= m;
    double b = 0.0;
    for (double x : means) b += (x - grand) * (x - grand);
    b *= n / (m - 1.0);
    if (w <= 0.0) {
      out(k) = b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
      continue;
    }
    const double var_plus = (n - 1.0) / n * w + b / n;
    out(k) = std::sqrt(var_plus / w);
  }
  return out;
}

CloneRun dc_sample(const Dataset& data, const ModelSpec& spec, int K, const Priors& priors,
                   const SamplerSettings& settings) {
  if (K < 1) throw DomainError("clone count must be at least 1");
  if (settings.chains < 1) throw DomainError("need at least one chain");
  if (settings.burnin < 0 || settings.iters <= settings.burnin + 1)
    throw DomainError("iterations must exceed burn-in by at least 2");
  if (settings.adapt_every < 1) throw DomainError("adaptation interval must be positive");
  if (!(priors.beta_precision > 0 && priors.phi_shape > 0 && priors.phi_rate > 0 && priors.tau2_shape > 0 &&
        priors.tau2_rate > 0))
    throw DomainError("prior parameters must be positive");

  Context ctx{spec, priors, settings, make_blocks(data, spec), {}, moment_start(data, spec)};
  ctx.K = K;
  ctx.G = static_cast<Eigen::Index>(ctx.blocks.size());
  ctx.q = static_cast<Eigen::Index>(spec.q_b());
  ctx.p = static_cast<Eigen::Index>(spec.p());
  ctx.n_obs = data.n();
  if (ctx.q > 0) ctx.shifts = find_shifts(ctx.blocks, spec);

  std::vector<ChainOutput> outputs(static_cast<std::size_t>(settings.chains));
  std::vector<std::string> errors(outputs.size());
#pragma omp parallel for schedule(dynamic) if (settings.parallel)
  for (int c = 0; c < settings.chains; ++c) {
    try {
      outputs[c] = Chain(ctx, c).run();
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  }
  for (std::size_t c = 0; c < errors.size(); ++c)
    if (!errors[c].empty()) throw NumericalError("chain " + std::to_string(c + 1) + ": " + errors[c]);

  CloneRun run;
  run.K = K;
  run.names = spec.parameter_names();
  for (auto& o : outputs) {
    run.chains.push_back(std::move(o.draws_r));
    run.chains_unconstrained.push_back(std::move(o.draws_u));
  }
  const MatrixXd all_r = stack(run.chains);
  const MatrixXd all_u = stack(run.chains_unconstrained);
  run.posterior_means = all_r.colwise().mean().transpose();
  run.posterior_vars = column_variances(all_r);
  run.posterior_means_unconstrained = all_u.colwise().mean().transpose();
  const MatrixXd centred = all_u.rowwise() - run.posterior_means_unconstrained.transpose();
  run.posterior_cov_unconstrained = centred.transpose() * centred / std::max<double>(1.0, all_u.rows() - 1.0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(run.posterior_cov_unconstrained, Eigen::EigenvaluesOnly);
  run.largest_eigenvalue = eig.eigenvalues().size() > 0 ? eig.eigenvalues().maxCoeff() : 0.0;
  run.rhat = gelman_rubin(run.chains);

  std::map<std::string, std::pair<long, long>> totals;
  for (const auto& o : outputs)
    for (const auto& [name, ct] : o.counts) {
      totals[name].first += ct.first;
      totals[name].second += ct.second;
    }
  for (const auto& [name, ct] : totals)
    run.acceptance[name] = ct.second > 0 ? static_cast<double>(ct.first) / static_cast<double>(ct.second) : kNaN;

  for (Eigen::Index k = 0; k < run.rhat.size(); ++k)
    if (run.rhat(k) > 1.1) run.warnings.push_back("R-hat " + format_number(run.rhat(k)) + " for " + run.names[k]);
  return run;
}

DCEstimates dc_estimates(const CloneRun& run) {
  DCEstimates out;
  out.estimates = run.posterior_means;
  out.std_errors = (run.posterior_vars.cwiseMax(0.0) * static_cast<double>(run.K)).cwiseSqrt();
  return out;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() != y.size() || x.size() < 2) throw DomainError("slope needs at least two paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

DCDiagnostics identifiability(const Dataset& data, const ModelSpec& spec, const Priors& priors,
                              const std::vector<int>& clones, const SamplerSettings& settings) {
  if (clones.size() < 2 || clones.front() != 1 || !std::is_sorted(clones.begin(), clones.end()) ||
      std::adjacent_find(clones.begin(), clones.end()) != clones.end())
    throw DomainError("clone list must be strictly ascending and start at 1");
  DCDiagnostics diag;
  diag.clones = clones;
  diag.names = spec.parameter_names();
  for (int K : clones) {
    SamplerSettings s = settings;
    s.seed = settings.seed + 1000003ULL * static_cast<std::uint64_t>(K);
    diag.runs.push_back(dc_sample(data, spec, K, priors, s));
  }
  const VectorXd var1 = diag.runs.front().posterior_cov_unconstrained.diagonal();
  std::vector<double> log_k;
  for (int K : clones) log_k.push_back(std::log(static_cast<double>(K)));
  std::vector<double> log_lambda;
  for (const auto& run : diag.runs) {
    const VectorXd v = run.posterior_cov_unconstrained.diagonal();
    std::vector<double> s(static_cast<std::size_t>(v.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) s[k] = var1(k) > 0.0 ? v(k) / var1(k) : kNaN;
    diag.scaled_variance.push_back(std::move(s));
    diag.lambda_max.push_back(run.largest_eigenvalue);
    log_lambda.push_back(std::log(run.largest_eigenvalue));
  }
  bool ok = true;
  for (std::size_t k = 0; k < diag.names.size(); ++k) {
    std::vector<double> ls;
    for (const auto& s : diag.scaled_variance) ls.push_back(std::log(s[k]));
    const double slope = ls_slope(log_k, ls);
    diag.slopes.push_back(slope);
    ok = ok && slope >= kSlopeLow && slope <= kSlopeHigh;
  }
  diag.lambda_slope = ls_slope(log_k, log_lambda);
  diag.identifiable = ok && diag.lambda_slope < 0.0 && diag.lambda_max.back() < kLambdaBar;
  return diag;
}

void write_chains_csv(const std::filesystem::path& path, const CloneRun& run) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "chain,iteration";
  for (const auto& n : run.names) out << ',' << n;
  out << '\n';
  for (std::size_t c = 0; c < run.chains.size(); ++c) {
    const auto& m = run.chains[c];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out << c + 1 << ',' << i + 1;
      for (Eigen::Index k = 0; k < m.cols(); ++k) out << ',' << format_number(m(i, k));
      out << '\n';
    }
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_diagnostics_csv(const std::filesystem::path& path, const DCDiagnostics& diag) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "K,parameter,scaled_variance,lambda_max\n";
  for (std::size_t i = 0; i < diag.clones.size(); ++i)
    for (std::size_t k = 0; k < diag.names.size(); ++k)
      out << diag.clones[i] << ',' << diag.names[k] << ',' << format_number(diag.scaled_variance[i][k]) << ','
          << format_number(diag.lambda_max[i]) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace betamix
