#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "betamix/model.hpp"

namespace betamix {

enum class Preset {
  /// 9 groups, 365 units; covariates medium, small (size dummies, large is the
  /// baseline) and centred log income drawn uniform on [-1, 1].
  Iqvt,
  /// 16 groups x 4 quarters x 3 locations; location and quarter dummies,
  /// quarter as the subgroup.
  Iqa,
};

struct SimDesign {
  Preset preset = Preset::Iqvt;
  /// Covariance structure of the generating model. Defaults: random intercept
  /// for Iqvt, quarter-within-plant effects without a plant term for Iqa.
  std::optional<CovKind> cov;
  bool group_effect = false;
  /// Reporting-scale truth; defaults to the preset's reference values.
  std::optional<VectorXd> truth;
  std::uint64_t seed = 1;
  /// Rows whose response is blanked out (Iqa default 2).
  std::optional<int> missing;
};

struct SimResult {
  Dataset data;
  std::vector<Record> missing;  // rows with no response (y is NaN)
  std::vector<VectorXd> effects;  // drawn random effects per group
  ModelSpec spec;
  ParamVector truth;
};

/// Covariates and grouping for a preset; responses are placeholders.
Dataset preset_skeleton(Preset preset, std::uint64_t seed);

/// Generating model for a preset (full fixed design) and its default truth.
ModelSpec preset_spec(const Dataset& skeleton, Preset preset, CovKind cov, bool group_effect);
VectorXd preset_truth(Preset preset, CovKind cov, bool group_effect);

/// Draws b_i ~ N(0, Sigma), then y_ij ~ Beta(mu_ij phi, (1 - mu_ij) phi) for
/// every record of the skeleton. Deterministic given the seed.
SimResult simulate_from(const Dataset& skeleton, const ModelSpec& spec, const ParamVector& truth,
                        std::uint64_t seed, int missing = 0);

SimResult simulate(const SimDesign& design);

std::string_view preset_name(Preset p);
Preset preset_from_name(std::string_view name);

}  // namespace betamix
