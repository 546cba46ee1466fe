#pragma once

#include <string>
#include <vector>

#include "betamix/estimator.hpp"

namespace betamix {

/// Empirical-Bayes prediction for one group: the posterior mode of b_i at the
/// fitted parameters.
struct GroupPrediction {
  std::string group;
  VectorXd b_hat;
  MatrixXd curvature;  // -Hessian of h at the mode
  std::vector<double> fitted;  // conditional means, in the group's record order
};

std::vector<GroupPrediction> predict_random_effects(const FitResult& fit, const Dataset& data);
std::vector<GroupPrediction> predict_random_effects(const Dataset& data, const ModelSpec& spec,
                                                    const ParamVector& theta);

/// A covariate setting over the model's fixed design; subgroup selects the
/// random-effect component for nested models.
struct Scenario {
  std::string name;
  VectorXd x;
  int subgroup = -1;
};

/// mu = g^{-1}(x.beta + z.b); b defaults to zero (population level).
double predict_scenario(const ModelSpec& spec, const VectorXd& beta, const Scenario& s, const VectorXd& b = {});
double predict_scenario(const FitResult& fit, const Scenario& s, const VectorXd& b = {});

/// 100 (mu_a - mu_b) / mu_b at b = 0.
double percent_difference(const ModelSpec& spec, const VectorXd& beta, const Scenario& a, const Scenario& b);
double percent_difference(const FitResult& fit, const Scenario& a, const Scenario& b);

/// Group-by-scenario predictions with the percent difference to the
/// population-level (b = 0) prediction of the same scenario.
struct ScenarioCell {
  std::string group;
  std::string scenario;
  double mu;
  double percent_vs_population;
};

std::vector<ScenarioCell> scenario_grid(const FitResult& fit, const std::vector<GroupPrediction>& groups,
                                        const std::vector<Scenario>& scenarios);

}  // namespace betamix
