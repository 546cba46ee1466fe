#include "betamix/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "betamix/error.hpp"

namespace betamix {

namespace {

double draw_beta(std::mt19937_64& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  double v = x / (x + y);
  if (!(v > 0.0)) v = std::numeric_limits<double>::min();
  if (!(v < 1.0)) v = std::nextafter(1.0, 0.0);
  return v;
}

}  // namespace

std::string_view preset_name(Preset p) { return p == Preset::Iqvt ? "iqvt" : "iqa"; }

Preset preset_from_name(std::string_view name) {
  if (name == "iqvt") return Preset::Iqvt;
  if (name == "iqa") return Preset::Iqa;
  throw DomainError("unknown simulation preset '" + std::string(name) + "'");
}

Dataset preset_skeleton(Preset preset, std::uint64_t seed) {
  Dataset d;
  if (preset == Preset::Iqvt) {
    d.schema.response = "iqvt";
    d.schema.group = "unit";
    d.schema.covariates = {"medium", "small", "income"};
    d.covariate_names = {"(Intercept)", "medium", "small", "income"};
    static constexpr int sizes[] = {24, 31, 36, 40, 42, 44, 46, 49, 53};
    std::mt19937_64 rng(seed ^ 0x5eedc0de5eedc0deULL);
    std::discrete_distribution<int> size_class({0.3, 0.4, 0.3});
    std::uniform_real_distribution<double> income(-1.0, 1.0);
    for (int g = 0; g < 9; ++g) {
      d.group_labels.push_back("U" + std::to_string(g + 1));
      for (int j = 0; j < sizes[g]; ++j) {
        const int c = size_class(rng);
        Record r;
        r.y = 0.5;
        r.group = g;
        r.x = {1.0, c == 1 ? 1.0 : 0.0, c == 2 ? 1.0 : 0.0, income(rng)};
        d.records.push_back(std::move(r));
      }
    }
  } else {
    d.schema.response = "iqa";
    d.schema.group = "plant";
    d.schema.subgroup = "quarter";
    d.schema.covariates = {"loc_reservoir", "loc_downstream", "q2", "q3", "q4"};
    d.covariate_names = {"(Intercept)", "loc_reservoir", "loc_downstream", "q2", "q3", "q4"};
    d.subgroup_labels = {"Q1", "Q2", "Q3", "Q4"};
    for (int g = 0; g < 16; ++g) {
      d.group_labels.push_back("P" + std::to_string(g + 1));
      for (int t = 0; t < 4; ++t)
        for (int loc = 0; loc < 3; ++loc) {
          Record r;
          r.y = 0.5;
          r.group = g;
          r.subgroup = t;
          r.x = {1.0, loc == 1 ? 1.0 : 0.0, loc == 2 ? 1.0 : 0.0, t == 1 ? 1.0 : 0.0, t == 2 ? 1.0 : 0.0,
                 t == 3 ? 1.0 : 0.0};
          d.records.push_back(std::move(r));
        }
    }
  }
  return d;
}

ModelSpec preset_spec(const Dataset& skeleton, Preset preset, CovKind cov, bool group_effect) {
  if (preset == Preset::Iqvt && cov == CovKind::Nested) throw DomainError("the iqvt preset has no subgroups");
  if (preset == Preset::Iqa && cov == CovKind::InterceptSlope)
    throw DomainError("the iqa preset has no slope covariate");
  auto names = skeleton.covariate_names;
  ModelSpec s = ModelSpec::make(skeleton, names, cov, Link(), preset == Preset::Iqvt && cov == CovKind::InterceptSlope ? "income" : "",
                                group_effect);
  s.name = std::string(preset_name(preset)) + "-" + std::string(cov_kind_name(cov));
  return s;
}

VectorXd preset_truth(Preset preset, CovKind cov, bool group_effect) {
  std::vector<double> v;
  if (preset == Preset::Iqvt) {
    v = {0.40, -0.07, -0.13, 0.47, 94.19};
    if (cov == CovKind::Intercept) v.push_back(62.36);
    if (cov == CovKind::InterceptSlope) v.insert(v.end(), {62.35, 51480.17, 0.85});
    if (cov == CovKind::Nested) throw DomainError("the iqvt preset has no subgroups");
  } else {
    v = {1.15, 0.24, 0.15, 0.22, 0.32, 0.06, 42.19};
    if (cov == CovKind::Intercept) v = {1.14, 0.24, 0.16, 0.22, 0.31, 0.05, 30.47, 28.97};
    if (cov == CovKind::Nested) {
      if (group_effect) {
        v.back() = 42.20;
        v.insert(v.end(), {43.54, 15.04});
      } else {
        v.push_back(11.19);
      }
    }
    if (cov == CovKind::InterceptSlope) throw DomainError("the iqa preset has no slope covariate");
  }
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

SimResult simulate_from(const Dataset& skeleton, const ModelSpec& spec, const ParamVector& truth,
                        std::uint64_t seed, int missing) {
  const auto cov = cov_matrix(truth.cov(spec));
  const double phi = truth.phi();
  if (!std::isfinite(phi) || phi <= 0.0) throw DomainError("invalid dispersion in simulation truth");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;

  SimResult out;
  out.spec = spec;
  out.truth = truth;
  const auto q = static_cast<Eigen::Index>(spec.q_b());
  for (std::size_t g = 0; g < skeleton.n_groups(); ++g) {
    VectorXd e(q);
    for (Eigen::Index k = 0; k < q; ++k) e(k) = normal(rng);
    out.effects.push_back(q > 0 ? VectorXd(cov.chol * e) : VectorXd());
  }
  Dataset data = skeleton;
  for (auto& r : data.records) {
    const auto pred = linear_predictor(spec, truth.beta(), out.effects.at(r.group), r);
    r.y = draw_beta(rng, pred.mu * phi, (1.0 - pred.mu) * phi);
  }
  if (missing < 0 || static_cast<std::size_t>(missing) >= data.records.size())
    throw DomainError("invalid number of missing responses");
  if (missing > 0) {
    std::vector<std::size_t> idx(data.records.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::size_t> pick;
    std::sample(idx.begin(), idx.end(), std::back_inserter(pick), missing, rng);
    std::vector<Record> kept;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      if (std::find(pick.begin(), pick.end(), i) != pick.end()) {
        Record r = data.records[i];
        r.y = std::numeric_limits<double>::quiet_NaN();
        out.missing.push_back(std::move(r));
      } else {
        kept.push_back(data.records[i]);
      }
    }
    data.records = std::move(kept);
    data.dropped_count = static_cast<std::size_t>(missing);
  }
  out.data = std::move(data);
  return out;
}

SimResult simulate(const SimDesign& design) {
  const Dataset skeleton = preset_skeleton(design.preset, design.seed);
  const CovKind cov = design.cov.value_or(design.preset == Preset::Iqvt ? CovKind::Intercept : CovKind::Nested);
  const ModelSpec spec = preset_spec(skeleton, design.preset, cov, design.group_effect);
  const VectorXd truth = design.truth.value_or(preset_truth(design.preset, cov, design.group_effect));
  const int missing = design.missing.value_or(design.preset == Preset::Iqa ? 2 : 0);
  return simulate_from(skeleton, spec, ParamVector::from_reporting(spec, truth), design.seed, missing);
}

}  // namespace betamix
