#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "betamix/model.hpp"

namespace betamix {

/// Proper priors on the reporting scale. Gamma densities use shape/rate.
struct Priors {
  double beta_mean = 0.0;
  double beta_precision = 0.001;
  double phi_shape = 1.0;
  double phi_rate = 0.001;
  double tau2_shape = 1.0;
  double tau2_rate = 0.001;
  // rho ~ Uniform(-1, 1)

  /// Log prior density of an unconstrained parameter vector, including the
  /// Jacobians of the log / log-variance / atanh transforms.
  double log_density(const ModelSpec& spec, const ParamVector& theta) const;
};

struct SamplerSettings {
  int chains = 3;
  int iters = 3000;
  int burnin = 1000;
  std::uint64_t seed = 1;
  int adapt_every = 50;
  /// Run chains concurrently. Chains have their own sub-seeds, so the draws do
  /// not depend on this flag.
  bool parallel = true;

  static SamplerSettings desk() { return {}; }
  static SamplerSettings long_run() {
    SamplerSettings s;
    s.iters = 6500;
    s.burnin = 1500;
    return s;
  }
};

struct CloneRun {
  int K = 1;
  std::vector<std::string> names;
  /// Post-burn-in draws per chain, one row per iteration.
  std::vector<MatrixXd> chains;               // reporting scale
  std::vector<MatrixXd> chains_unconstrained;  // sampler scale
  VectorXd posterior_means;  // reporting scale, pooled over chains
  VectorXd posterior_vars;
  VectorXd posterior_means_unconstrained;
  MatrixXd posterior_cov_unconstrained;
  VectorXd rhat;
  /// Post-adaptation acceptance rate per proposal block, averaged over chains.
  std::map<std::string, double> acceptance;
  /// Largest eigenvalue of the unconstrained-scale posterior covariance.
  double largest_eigenvalue = 0.0;
  std::vector<std::string> warnings;
};

/// Replicates every group K times; clone c of group g gets the label
/// "<label>#<c+1>" and id c * n_groups + g.
Dataset clone_dataset(const Dataset& data, int K);

/// Metropolis-within-Gibbs sampler for the K-cloned posterior. Each clone of
/// each group carries its own latent effect vector.
CloneRun dc_sample(const Dataset& data, const ModelSpec& spec, int K, const Priors& priors = {},
                   const SamplerSettings& settings = {});

struct DCEstimates {
  VectorXd estimates;   // pooled posterior means
  VectorXd std_errors;  // sqrt(K * pooled posterior variance)
};

DCEstimates dc_estimates(const CloneRun& run);

/// Gelman-Rubin potential scale reduction per column; 1 for constant chains.
VectorXd gelman_rubin(const std::vector<MatrixXd>& chains);

struct DCDiagnostics {
  std::vector<int> clones;
  std::vector<std::string> names;
  /// scaled_variance[k][param] = var_K / var_1 on the unconstrained scale.
  std::vector<std::vector<double>> scaled_variance;
  std::vector<double> lambda_max;
  /// Least-squares slope of log s(K) on log K per parameter.
  std::vector<double> slopes;
  double lambda_slope = 0.0;
  bool identifiable = false;
  std::vector<CloneRun> runs;
};

inline constexpr double kSlopeLow = -1.5;
inline constexpr double kSlopeHigh = -0.6;
inline constexpr double kLambdaBar = 1.1;

/// Runs dc_sample for every K (ascending, starting at 1). Identifiable when
/// every slope lies in [kSlopeLow, kSlopeHigh], log lambda_max decreases in K
/// and lambda_max at the largest K is below kLambdaBar.
DCDiagnostics identifiability(const Dataset& data, const ModelSpec& spec, const Priors& priors = {},
                              const std::vector<int>& clones = {1, 5, 10, 20, 30, 40, 50},
                              const SamplerSettings& settings = {});

/// Least-squares slope of y on x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

/// chain, iteration, then one column per parameter (reporting scale).
void write_chains_csv(const std::filesystem::path& path, const CloneRun& run);
/// K, parameter, scaled_variance, lambda_max.
void write_diagnostics_csv(const std::filesystem::path& path, const DCDiagnostics& diag);

}  // namespace betamix
