#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "betamix/dataclone.hpp"
#include "betamix/marginal.hpp"
#include "betamix/model.hpp"

namespace betamix {

struct ModelConfig {
  std::string name;
  std::vector<std::string> fixed;
  std::string cov = "none";
  std::string slope;
  bool group_effect = true;
  std::string link = "logit";

  ModelSpec build(const Dataset& data) const;
};

struct ScenarioConfig {
  std::string name;
  /// Covariate values by name; unnamed covariates are 0 (the intercept is 1).
  std::map<std::string, double> x;
  std::optional<std::string> subgroup;
};

struct ProfileConfig {
  std::vector<std::string> parameters;  // empty: every parameter
  double level = 0.95;
};

struct DcConfig {
  std::vector<int> clones = {1, 5, 10, 20, 30, 40, 50};
  int chains = 3;
  int iters = 3000;
  int burnin = 1000;
  Priors priors;
};

struct SimulateConfig {
  std::string preset = "iqvt";
  std::optional<std::string> cov;
  bool group_effect = false;
  std::optional<int> missing;
  std::optional<std::vector<double>> truth;
};

/// Everything a CLI run needs. Parsed from JSON; unknown keys are rejected.
struct RunConfig {
  std::string command;
  std::string data;
  CsvSchema schema;
  std::vector<ModelConfig> models;
  /// Model used by profile, dc and predict; empty selects the last one.
  std::string model;
  IntegrationSettings method;
  ProfileConfig profile;
  DcConfig dc;
  std::vector<ScenarioConfig> scenarios;
  SimulateConfig simulate;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

/// Throws ConfigError naming the offending line or field.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON text: every field in a fixed order, defaults filled in.
/// parse_config(canonical_form(c)) reproduces c.
std::string canonical_form(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace betamix
