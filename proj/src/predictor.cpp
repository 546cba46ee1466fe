#include "betamix/predictor.hpp"

#include <algorithm>

#include "betamix/error.hpp"

namespace betamix {

namespace {

VectorXd scenario_z(const ModelSpec& spec, const Scenario& s) {
  VectorXd z = VectorXd::Zero(static_cast<Eigen::Index>(spec.q_b()));
  switch (spec.cov) {
    case CovKind::None:
      break;
    case CovKind::Intercept:
      z(0) = 1.0;
      break;
    case CovKind::InterceptSlope: {
      z(0) = 1.0;
      auto it = std::find(spec.fixed.begin(), spec.fixed.end(), spec.slope_column);
      if (it != spec.fixed.end()) z(1) = s.x(it - spec.fixed.begin());
      break;
    }
    case CovKind::Nested: {
      const int lead = spec.group_effect ? 1 : 0;
      if (spec.group_effect) z(0) = 1.0;
      if (s.subgroup >= 0 && s.subgroup < spec.subgroups) z(lead + s.subgroup) = 1.0;
      break;
    }
  }
  return z;
}

}  // namespace

std::vector<GroupPrediction> predict_random_effects(const Dataset& data, const ModelSpec& spec,
                                                    const ParamVector& theta) {
  const auto blocks = make_blocks(data, spec);
  std::vector<GroupPrediction> out(blocks.size());
  std::vector<std::string> errors(blocks.size());
  const long n = static_cast<long>(blocks.size());
#pragma omp parallel for schedule(dynamic)
  for (long g = 0; g < n; ++g) {
    const auto& blk = blocks[g];
    auto& pred = out[g];
    pred.group = data.group_labels.at(blk.group);
    try {
      if (spec.q_b() > 0) {
        const auto sol = inner_mode(blk, spec, theta);
        pred.b_hat = sol.b_hat;
        pred.curvature = sol.neg_hessian;
      }
      const VectorXd eta = blk.X * theta.beta() + (spec.q_b() > 0 ? VectorXd(blk.Z * pred.b_hat)
                                                                  : VectorXd::Zero(blk.size()));
      for (Eigen::Index j = 0; j < eta.size(); ++j) pred.fitted.push_back(spec.link.invert(eta(j)));
    } catch (const std::exception& e) {
      errors[g] = e.what();
    }
  }
  for (std::size_t g = 0; g < errors.size(); ++g)
    if (!errors[g].empty()) throw NumericalError("group '" + out[g].group + "': " + errors[g]);
  return out;
}

std::vector<GroupPrediction> predict_random_effects(const FitResult& fit, const Dataset& data) {
  return predict_random_effects(data, fit.spec, fit.theta_hat);
}

double predict_scenario(const ModelSpec& spec, const VectorXd& beta, const Scenario& s, const VectorXd& b) {
  if (s.x.size() != beta.size()) throw DomainError("scenario covariate length does not match the model");
  double eta = s.x.dot(beta);
  if (b.size() > 0) {
    if (static_cast<std::size_t>(b.size()) != spec.q_b()) throw DomainError("random effect length mismatch");
    eta += scenario_z(spec, s).dot(b);
  }
  return spec.link.invert(eta);
}

double predict_scenario(const FitResult& fit, const Scenario& s, const VectorXd& b) {
  return predict_scenario(fit.spec, fit.theta_hat.beta(), s, b);
}

double percent_difference(const ModelSpec& spec, const VectorXd& beta, const Scenario& a, const Scenario& b) {
  const double ma = predict_scenario(spec, beta, a);
  const double mb = predict_scenario(spec, beta, b);
  return 100.0 * (ma - mb) / mb;
}

double percent_difference(const FitResult& fit, const Scenario& a, const Scenario& b) {
  return percent_difference(fit.spec, fit.theta_hat.beta(), a, b);
}

std::vector<ScenarioCell> scenario_grid(const FitResult& fit, const std::vector<GroupPrediction>& groups,
                                        const std::vector<Scenario>& scenarios) {
  std::vector<ScenarioCell> cells;
  for (const auto& g : groups)
    for (const auto& s : scenarios) {
      const double pop = predict_scenario(fit, s);
      const double mu = predict_scenario(fit, s, g.b_hat);
      cells.push_back({g.group, s.name, mu, 100.0 * (mu - pop) / pop});
    }
  return cells;
}

}  // namespace betamix
