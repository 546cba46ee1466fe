#pragma once

#include <optional>
#include <string>
#include <vector>

#include "betamix/model.hpp"
#include "betamix/quadrature.hpp"

namespace betamix {

/// Records of one group with the design cached for the likelihood kernels.
struct GroupBlock {
  int group = 0;
  VectorXd y;
  VectorXd log_y;
  VectorXd log1m_y;
  MatrixXd X;  // n_i x p, selected fixed-effect columns
  MatrixXd Z;  // n_i x q_b

  Eigen::Index size() const { return y.size(); }
};

/// Splits a dataset into per-group blocks (groups in label order).
std::vector<GroupBlock> make_blocks(const Dataset& data, const ModelSpec& spec);

/// Mode of h(b) = log f(y_i | b) + log f(b | Sigma) and the curvature there.
struct InnerSolution {
  VectorXd b_hat;
  MatrixXd neg_hessian;
  double h_at_mode = 0.0;
  int iterations = 0;
};

/// Sum over the block of log f(y_ij | mu_ij(b), phi).
double conditional_loglik(const GroupBlock& block, const ModelSpec& spec, const VectorXd& beta, double phi,
                          const VectorXd& b);

/// h(b) for a block: conditional log-likelihood plus Gaussian log prior.
double joint_log_density(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta,
                         const VectorXd& b);

/// Newton maximization of h(b). Throws NumericalError on failure.
InnerSolution inner_mode(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta,
                         const VectorXd* warm_start = nullptr);

double laplace_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta);
double laplace_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta,
                        const InnerSolution& mode);

/// Product Gauss-Hermite rule, centred at the mode and scaled by the Cholesky
/// factor of the inverse curvature. For q_b > 2 nodes with normalized joint
/// weight below 1e-10 are pruned.
double aghq_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, int nodes_per_dim);
double aghq_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, int nodes_per_dim,
                     const InnerSolution& mode);

/// Importance estimate with Halton points pushed through N(b_hat, H^{-1}).
double qmc_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, int n_points);
double qmc_marginal(const GroupBlock& block, const ModelSpec& spec, const ParamVector& theta, int n_points,
                    const InnerSolution& mode);

enum class Method { Laplace, AGHQ, QMC };

std::string_view method_name(Method m);
Method method_from_name(std::string_view name);

struct IntegrationSettings {
  Method method = Method::Laplace;
  int nodes = 15;
  int qmc_points = 4096;
};

inline constexpr long kMaxQuadratureNodes = 1'000'000;

/// Total marginal log-likelihood; groups evaluated in parallel, summed in a
/// fixed order.
double marginal_loglik(const Dataset& data, const ModelSpec& spec, const ParamVector& theta,
                       const IntegrationSettings& settings = {});

/// Single-threaded reference for marginal_loglik; results are bit-identical.
double marginal_loglik_serial(const Dataset& data, const ModelSpec& spec, const ParamVector& theta,
                              const IntegrationSettings& settings = {});

/// Reusable evaluator holding the group blocks and per-group inner-mode warm
/// starts. Not safe for concurrent calls on one instance.
class MarginalLikelihood {
 public:
  MarginalLikelihood(const Dataset& data, ModelSpec spec, IntegrationSettings settings = {});

  double operator()(const ParamVector& theta);
  double operator()(const VectorXd& packed) { return (*this)(ParamVector::unpack(spec_, packed)); }
  /// Per-group contributions, parallel over groups.
  std::vector<double> contributions(const ParamVector& theta, bool use_warm_start = true);
  std::vector<double> contributions_serial(const ParamVector& theta) const;

  const ModelSpec& spec() const { return spec_; }
  const std::vector<GroupBlock>& blocks() const { return blocks_; }
  const IntegrationSettings& settings() const { return settings_; }
  const std::vector<std::string>& group_labels() const { return group_labels_; }
  std::size_t n_obs() const { return n_obs_; }
  void reset_warm_starts();

 private:
  double group_value(std::size_t g, const ParamVector& theta, const VectorXd* warm, VectorXd* mode_out) const;

  ModelSpec spec_;
  IntegrationSettings settings_;
  std::vector<GroupBlock> blocks_;
  std::vector<std::string> group_labels_;
  std::vector<std::optional<VectorXd>> warm_;
  GaussHermiteRule rule_;
  std::vector<VectorXd> qmc_points_;
  std::size_t n_obs_ = 0;
};

}  // namespace betamix
