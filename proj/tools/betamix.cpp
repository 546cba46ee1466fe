#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "betamix/config.hpp"
#include "betamix/error.hpp"
#include "betamix/estimator.hpp"
#include "betamix/predictor.hpp"
#include "betamix/report.hpp"
#include "betamix/simulate.hpp"

namespace fs = std::filesystem;
using namespace betamix;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4, kIo = 5 };

struct Overrides {
  std::string config;
  std::optional<std::string> data;
  std::optional<std::string> method;
  std::optional<int> nodes;
  std::optional<int> qmc_points;
  std::optional<std::vector<int>> clones;
  std::optional<int> chains;
  std::optional<int> iters;
  std::optional<int> burnin;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> level;
  std::optional<std::string> preset;
  std::optional<std::string> model;
};

void add_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON run configuration");
  sub->add_option("--data", o.data, "input CSV");
  sub->add_option("--method", o.method, "laplace | aghq | qmc");
  sub->add_option("--nodes", o.nodes, "AGHQ nodes per dimension (odd)");
  sub->add_option("--qmc-points", o.qmc_points, "quasi-Monte Carlo points per group");
  sub->add_option("--clones", o.clones, "clone counts, ascending, starting at 1")->delimiter(',');
  sub->add_option("--chains", o.chains, "MCMC chains");
  sub->add_option("--iters", o.iters, "MCMC iterations per chain");
  sub->add_option("--burnin", o.burnin, "MCMC burn-in iterations");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--level", o.level, "confidence level for intervals");
  sub->add_option("--preset", o.preset, "simulation preset: iqvt | iqa");
  sub->add_option("--model", o.model, "model used by profile, dc and predict (default: last)");
}

RunConfig resolve(const std::string& command, const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  c.command = command;
  if (o.data) c.data = *o.data;
  if (o.method) {
    try {
      c.method.method = method_from_name(*o.method);
    } catch (const DomainError& e) {
      throw ConfigError("--method: " + std::string(e.what()));
    }
  }
  if (o.nodes) c.method.nodes = *o.nodes;
  if (o.qmc_points) c.method.qmc_points = *o.qmc_points;
  if (o.clones) c.dc.clones = *o.clones;
  if (o.chains) c.dc.chains = *o.chains;
  if (o.iters) c.dc.iters = *o.iters;
  if (o.burnin) c.dc.burnin = *o.burnin;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.level) c.profile.level = *o.level;
  if (o.preset) c.simulate.preset = *o.preset;
  if (o.model) c.model = *o.model;
  return c;
}

Dataset load_data(const RunConfig& c) {
  if (c.data.empty()) throw ConfigError("no data file given (--data or \"data\")");
  return ingest_csv(c.data, c.schema);
}

std::vector<ModelSpec> load_models(const RunConfig& c, const Dataset& data) {
  if (c.models.empty()) throw ConfigError("config lists no models");
  std::vector<ModelSpec> specs;
  for (std::size_t i = 0; i < c.models.size(); ++i) {
    try {
      auto spec = c.models[i].build(data);
      if (spec.name.empty()) spec.name = "model" + std::to_string(i + 1);
      specs.push_back(std::move(spec));
    } catch (const std::exception& e) {
      throw ConfigError("field 'models[" + std::to_string(i) + "]': " + e.what());
    }
  }
  return specs;
}

ModelSpec target_model(const RunConfig& c, const Dataset& data) {
  auto specs = load_models(c, data);
  if (c.model.empty()) return specs.back();
  for (auto& s : specs)
    if (s.name == c.model) return s;
  throw ConfigError("field 'model': no model named '" + c.model + "'");
}

FitOptions fit_options(const RunConfig& c) {
  FitOptions o;
  o.settings = c.method;
  return o;
}

class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }
  void json(const std::string& name, const Json& j) {
    write_json(dir_ / name, j);
    files_.push_back(name);
  }
  void table(const std::string& name, const Table& t) {
    write_table(dir_ / name, t);
    files_.push_back(name);
  }
  void csv(const std::string& name, const auto& writer) {
    writer(dir_ / name);
    files_.push_back(name);
  }
  const std::vector<std::string>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

void run_fit(const RunConfig& c, Output& out, bool compare) {
  const auto data = load_data(c);
  const auto specs = load_models(c, data);
  std::vector<FitResult> fits;
  for (const auto& s : specs) fits.push_back(fit(data, s, fit_options(c)));
  Json summary;
  summary["fits"] = Json::array();
  Table est{{"model", "parameter", "estimate", "std_error", "implied_variance"}, {}};
  for (const auto& f : fits) {
    summary["fits"].push_back(fit_summary(f));
    for (auto row : estimates_table(f).rows) {
      row.insert(row.begin(), f.spec.name);
      est.rows.push_back(std::move(row));
    }
  }
  if (compare) {
    const auto table = model_compare(fits);
    summary["comparison"] = compare_summary(table);
    out.table("compare.csv", compare_table(table));
    out.table("lr_tests.csv", lr_table(table));
  }
  out.table("estimates.csv", est);
  out.json("summary.json", summary);
}

void run_profile(const RunConfig& c, Output& out) {
  const auto data = load_data(c);
  const auto spec = target_model(c, data);
  const auto f = fit(data, spec, fit_options(c));
  std::vector<std::string> params = c.profile.parameters.empty() ? f.names : c.profile.parameters;
  if (!(c.profile.level > 0.0 && c.profile.level < 1.0)) throw ConfigError("field 'profile.level': must lie in (0,1)");
  std::vector<ProfileTrace> traces;
  for (const auto& p : params) {
    std::size_t idx = 0;
    try {
      idx = f.index_of(p);
    } catch (const std::exception&) {
      throw ConfigError("field 'profile.parameters': unknown parameter '" + p + "'");
    }
    traces.push_back(profile_ci(data, f, idx, c.profile.level));
  }
  Json summary;
  summary["fit"] = fit_summary(f);
  summary["profile"] = profile_summary(f, traces);
  out.table("profile.csv", profile_table(traces));
  out.json("summary.json", summary);
}

void run_dc(const RunConfig& c, Output& out) {
  if (!c.seed) throw ConfigError("dc needs a seed (--seed or \"seed\")");
  const auto data = load_data(c);
  const auto spec = target_model(c, data);
  SamplerSettings s;
  s.chains = c.dc.chains;
  s.iters = c.dc.iters;
  s.burnin = c.dc.burnin;
  s.seed = *c.seed;
  DCDiagnostics diag;
  try {
    diag = identifiability(data, spec, c.dc.priors, c.dc.clones, s);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("dc settings: ") + e.what());
  }
  for (const auto& run : diag.runs)
    out.csv("chains_K" + std::to_string(run.K) + ".csv", [&](const fs::path& p) { write_chains_csv(p, run); });
  out.csv("diagnostics.csv", [&](const fs::path& p) { write_diagnostics_csv(p, diag); });
  Json summary;
  summary["model"] = spec.name;
  summary["seed"] = *c.seed;
  summary["dc"] = dc_summary(diag);
  out.json("summary.json", summary);
  for (const auto& run : diag.runs)
    for (const auto& w : run.warnings) std::cerr << "warning: K=" << run.K << ": " << w << '\n';
}

Scenario build_scenario(const ScenarioConfig& sc, const ModelSpec& spec, const Dataset& data) {
  Scenario s;
  s.name = sc.name;
  s.x = VectorXd::Zero(static_cast<Eigen::Index>(spec.p()));
  for (std::size_t k = 0; k < spec.p(); ++k)
    if (spec.fixed_names[k] == "(Intercept)") s.x(static_cast<Eigen::Index>(k)) = 1.0;
  for (const auto& [name, value] : sc.x) {
    auto it = std::find(spec.fixed_names.begin(), spec.fixed_names.end(), name);
    if (it == spec.fixed_names.end())
      throw ConfigError("scenario '" + sc.name + "': '" + name + "' is not a fixed effect of the model");
    s.x(it - spec.fixed_names.begin()) = value;
  }
  if (sc.subgroup) {
    auto it = std::find(data.subgroup_labels.begin(), data.subgroup_labels.end(), *sc.subgroup);
    if (it == data.subgroup_labels.end())
      throw ConfigError("scenario '" + sc.name + "': unknown subgroup '" + *sc.subgroup + "'");
    s.subgroup = static_cast<int>(it - data.subgroup_labels.begin());
  }
  return s;
}

void run_predict(const RunConfig& c, Output& out) {
  const auto data = load_data(c);
  const auto spec = target_model(c, data);
  const auto f = fit(data, spec, fit_options(c));
  const auto preds = predict_random_effects(f, data);
  Json summary;
  summary["fit"] = fit_summary(f);
  std::vector<Scenario> scenarios;
  for (const auto& sc : c.scenarios) scenarios.push_back(build_scenario(sc, spec, data));
  Json sj = Json::array();
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    Json item{{"name", scenarios[i].name}, {"mu", sig_json(predict_scenario(f, scenarios[i]))}};
    if (i > 0) item["percent_vs_first"] = sig_json(percent_difference(f, scenarios[i], scenarios.front()));
    sj.push_back(std::move(item));
  }
  summary["scenarios"] = std::move(sj);
  out.table("random_effects.csv", random_effects_table(preds));
  out.table("fitted.csv", fitted_table(preds));
  if (!scenarios.empty()) out.table("scenarios.csv", scenario_table(scenario_grid(f, preds, scenarios)));
  out.json("summary.json", summary);
}

void run_simulate(const RunConfig& c, Output& out) {
  if (!c.seed) throw ConfigError("simulate needs a seed (--seed or \"seed\")");
  SimDesign d;
  try {
    d.preset = preset_from_name(c.simulate.preset);
    if (c.simulate.cov) d.cov = cov_kind_from_name(*c.simulate.cov);
  } catch (const DomainError& e) {
    throw ConfigError("field 'simulate': " + std::string(e.what()));
  }
  d.group_effect = c.simulate.group_effect;
  d.seed = *c.seed;
  d.missing = c.simulate.missing;
  if (c.simulate.truth) d.truth = Eigen::Map<const VectorXd>(c.simulate.truth->data(), c.simulate.truth->size());
  SimResult sim;
  try {
    sim = simulate(d);
  } catch (const DomainError& e) {
    throw ConfigError("field 'simulate': " + std::string(e.what()));
  }
  out.csv("data.csv", [&](const fs::path& p) { write_csv(p, sim.data, sim.missing); });
  Table eff;
  eff.header.push_back("group");
  const auto q = static_cast<Eigen::Index>(sim.spec.q_b());
  for (Eigen::Index r = 0; r < q; ++r) eff.header.push_back("b_" + std::to_string(r + 1));
  for (std::size_t g = 0; g < sim.effects.size(); ++g) {
    std::vector<std::string> row{sim.data.group_labels[g]};
    for (Eigen::Index r = 0; r < sim.effects[g].size(); ++r) row.push_back(format_sig(sim.effects[g](r), 17));
    eff.rows.push_back(std::move(row));
  }
  out.table("effects.csv", eff);
  const auto names = sim.spec.parameter_names();
  const VectorXd truth = d.truth.value_or(preset_truth(d.preset, sim.spec.cov, d.group_effect));
  Json tj = Json::object();
  for (std::size_t k = 0; k < names.size(); ++k) tj[names[k]] = truth(static_cast<Eigen::Index>(k));
  Json schema{{"response", sim.data.schema.response},
              {"covariates", sim.data.schema.covariates},
              {"group", sim.data.schema.group},
              {"subgroup", sim.data.schema.subgroup ? Json(*sim.data.schema.subgroup) : Json(nullptr)}};
  out.json("summary.json", Json{{"preset", std::string(preset_name(d.preset))},
                                {"seed", *c.seed},
                                {"covariance", std::string(cov_kind_name(sim.spec.cov))},
                                {"n_obs", sim.data.n()},
                                {"n_missing", sim.missing.size()},
                                {"n_groups", sim.data.n_groups()},
                                {"schema", schema},
                                {"truth", tj}});
}

int run(const std::string& command, const Overrides& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig c = resolve(command, o);
  Output out(c.out);
  if (command == "fit") run_fit(c, out, false);
  else if (command == "compare") run_fit(c, out, true);
  else if (command == "profile") run_profile(c, out);
  else if (command == "dc") run_dc(c, out);
  else if (command == "predict") run_predict(c, out);
  else if (command == "simulate") run_simulate(c, out);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Json manifest{{"tool", "betamix"},
                {"version", kVersion},
                {"command", command},
                {"seed", c.seed ? Json(*c.seed) : Json(nullptr)},
                {"config", Json::parse(canonical_form(c))},
                {"files", out.files()},
                {"threads", omp_get_max_threads()},
                {"wall_time_seconds", wall}};
  write_json(out.dir() / "manifest.json", manifest);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beta mixed-effects regression: fitting, profiling, data cloning and simulation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Overrides o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"fit", "fit every model in the config"},
      {"compare", "fit the models and tabulate them with likelihood-ratio tests"},
      {"profile", "profile-likelihood intervals for the selected model"},
      {"dc", "data-cloning estimates and identifiability diagnostics"},
      {"predict", "empirical-Bayes random effects and scenario predictions"},
      {"simulate", "simulate a dataset from a preset"}};
  for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), o);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const ConfigError& e) {
    std::cerr << "betamix: config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DomainError& e) {
    std::cerr << "betamix: config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "betamix: data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "betamix: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const IoError& e) {
    std::cerr << "betamix: io error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "betamix: error: " << e.what() << '\n';
    return kNumerical;
  }
}
