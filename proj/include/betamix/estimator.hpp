#pragma once

#include <optional>
#include <string>
#include <vector>

#include "betamix/marginal.hpp"
#include "betamix/optim.hpp"

namespace betamix {

struct FitOptions {
  IntegrationSettings settings;
  std::optional<ParamVector> init;
  BfgsOptions bfgs;
  bool compute_hessian = true;
};

struct FitResult {
  ModelSpec spec;
  std::vector<std::string> names;
  ParamVector theta_hat;
  VectorXd estimates;  // reporting scale
  double loglik = 0.0;
  /// Hessian of the negative log-likelihood on the reporting scale.
  MatrixXd hessian;
  /// Same on the unconstrained scale used by the optimizer.
  MatrixXd hessian_unconstrained;
  VectorXd std_errors;
  VectorXd std_errors_unconstrained;
  bool converged = false;
  /// Reporting Hessian needed smaller steps or an SPD projection.
  bool hessian_adjusted = false;
  double grad_norm = 0.0;
  int iterations = 0;
  std::string message;
  std::size_t n_obs = 0;
  std::size_t n_groups = 0;
  std::size_t data_fingerprint = 0;
  IntegrationSettings settings;

  std::size_t index_of(const std::string& name) const;
};

/// Starting point: beta by least squares of g(y) on X, log phi = log 10,
/// log-variances = log 0.1, atanh rho = 0.
ParamVector auto_init(const Dataset& data, const ModelSpec& spec);

/// Maximum marginal likelihood by BFGS on the unconstrained scale.
FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options = {});

/// estimate -/+ z * SE on the reporting scale.
struct Interval {
  double lower;
  double upper;
};
Interval wald_interval(const FitResult& fit, std::size_t param, double level = 0.95);

struct ProfileOptions {
  int points = 21;
  double span_se = 4.0;
  int max_extension = 20;
  BfgsOptions bfgs;
};

/// Profile of one coordinate of a generic log-likelihood; all values on the
/// objective's own scale.
struct ProfileCurve {
  std::vector<double> grid;
  std::vector<double> profile;
  double loglik_max = 0.0;
  double cutoff = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool lower_open = false;
  bool upper_open = false;
};

/// `loglik` is maximized over every coordinate except `index`, which is held at
/// each grid value. Endpoints solve 2 (max - profile) = chi2_1(level) on a
/// monotone cubic interpolant.
ProfileCurve profile_curve(const Objective& loglik, const VectorXd& x_hat, double loglik_max, std::size_t index,
                           double se, double level = 0.95, const ProfileOptions& options = {});

struct ProfileTrace {
  std::string parameter;
  std::size_t index = 0;
  double level = 0.95;
  ProfileCurve curve;                  // unconstrained scale
  std::vector<double> grid_reporting;  // curve.grid mapped to the reporting scale
  double lower = 0.0;                  // reporting scale
  double upper = 0.0;
  bool lower_open = false;
  bool upper_open = false;
};

ProfileTrace profile_ci(const Dataset& data, const FitResult& fit, std::size_t param, double level = 0.95,
                        const ProfileOptions& options = {});

struct LikelihoodRatio {
  std::size_t smaller;
  std::size_t larger;
  double statistic;
  int df;
  double p_value;
};

struct CompareTable {
  std::vector<std::string> models;
  std::vector<std::string> parameters;
  /// estimates[param][model]; NaN where a model lacks the parameter.
  std::vector<std::vector<double>> estimates;
  std::vector<double> loglik;
  std::vector<LikelihoodRatio> tests;
};

/// Side-by-side estimates plus likelihood-ratio tests for every pair whose
/// parameter names are nested. Throws DataError when fits used different data.
CompareTable model_compare(const std::vector<FitResult>& fits);

/// chi-square quantile with one degree of freedom.
double chi2_quantile(double level, double df = 1.0);

}  // namespace betamix
