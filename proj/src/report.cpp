#include "betamix/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "betamix/error.hpp"

namespace betamix {

namespace {

bool is_precision(const std::string& name) { return name.rfind("tau2", 0) == 0; }

std::string cell(double v) { return format_sig(v); }

}  // namespace

std::string format_sig(double v, int digits) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

Json sig_json(double v) {
  if (!std::isfinite(v)) return nullptr;
  const std::string s = format_sig(v);
  double out = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), out);
  return out;
}

Json fit_summary(const FitResult& fit) {
  Json j;
  j["model"] = Json{{"name", fit.spec.name},
                    {"fixed", fit.spec.fixed_names},
                    {"covariance", std::string(cov_kind_name(fit.spec.cov))},
                    {"link", std::string(fit.spec.link.name())}};
  if (fit.spec.cov == CovKind::InterceptSlope) j["model"]["slope"] = fit.spec.slope_name;
  if (fit.spec.cov == CovKind::Nested) j["model"]["group_effect"] = fit.spec.group_effect;
  j["data"] = Json{{"n_obs", fit.n_obs}, {"n_groups", fit.n_groups}};
  j["method"] = Json{{"name", std::string(method_name(fit.settings.method))}};
  if (fit.settings.method == Method::AGHQ) j["method"]["nodes"] = fit.settings.nodes;
  if (fit.settings.method == Method::QMC) j["method"]["qmc_points"] = fit.settings.qmc_points;
  j["loglik"] = sig_json(fit.loglik);
  j["converged"] = fit.converged;
  j["hessian_adjusted"] = fit.hessian_adjusted;
  j["iterations"] = fit.iterations;
  j["gradient_norm"] = sig_json(fit.grad_norm);
  j["message"] = fit.message;
  Json params = Json::array();
  for (std::size_t k = 0; k < fit.names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    Json p{{"name", fit.names[k]}, {"estimate", sig_json(fit.estimates(i))}, {"std_error", sig_json(fit.std_errors(i))}};
    if (is_precision(fit.names[k])) p["implied_variance"] = sig_json(1.0 / fit.estimates(i));
    params.push_back(std::move(p));
  }
  j["parameters"] = std::move(params);
  return j;
}

Json compare_summary(const CompareTable& t) {
  Json j;
  j["models"] = t.models;
  Json rows = Json::array();
  for (std::size_t k = 0; k < t.parameters.size(); ++k) {
    Json est = Json::array();
    for (double v : t.estimates[k]) est.push_back(sig_json(v));
    rows.push_back(Json{{"parameter", t.parameters[k]}, {"estimates", est}});
  }
  j["parameters"] = std::move(rows);
  Json ll = Json::array();
  for (double v : t.loglik) ll.push_back(sig_json(v));
  j["maximised_loglik"] = std::move(ll);
  Json tests = Json::array();
  for (const auto& lr : t.tests)
    tests.push_back(Json{{"smaller", t.models[lr.smaller]},
                         {"larger", t.models[lr.larger]},
                         {"statistic", sig_json(lr.statistic)},
                         {"df", lr.df},
                         {"p_value", sig_json(lr.p_value)}});
  j["lr_tests"] = std::move(tests);
  return j;
}

Json profile_summary(const FitResult& fit, const std::vector<ProfileTrace>& traces) {
  Json j;
  j["level"] = traces.empty() ? 0.95 : traces.front().level;
  j["loglik"] = sig_json(fit.loglik);
  Json items = Json::array();
  for (const auto& t : traces) {
    const auto w = wald_interval(fit, t.index, t.level);
    items.push_back(Json{{"parameter", t.parameter},
                         {"estimate", sig_json(fit.estimates(static_cast<Eigen::Index>(t.index)))},
                         {"profile", Json{{"lower", sig_json(t.lower)},
                                          {"upper", sig_json(t.upper)},
                                          {"lower_open", t.lower_open},
                                          {"upper_open", t.upper_open}}},
                         {"wald", Json{{"lower", sig_json(w.lower)}, {"upper", sig_json(w.upper)}}}});
  }
  j["intervals"] = std::move(items);
  return j;
}

Json dc_summary(const DCDiagnostics& diag) {
  Json j;
  j["clones"] = diag.clones;
  Json runs = Json::array();
  for (const auto& run : diag.runs) {
    const auto est = dc_estimates(run);
    Json params = Json::array();
    for (std::size_t k = 0; k < run.names.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      params.push_back(Json{{"name", run.names[k]},
                            {"estimate", sig_json(est.estimates(i))},
                            {"std_error", sig_json(est.std_errors(i))},
                            {"rhat", sig_json(run.rhat(i))}});
    }
    Json acc = Json::object();
    for (const auto& [name, rate] : run.acceptance) acc[name] = sig_json(rate);
    runs.push_back(Json{{"K", run.K},
                        {"parameters", std::move(params)},
                        {"lambda_max", sig_json(run.largest_eigenvalue)},
                        {"acceptance", std::move(acc)},
                        {"warnings", run.warnings}});
  }
  j["runs"] = std::move(runs);
  Json slopes = Json::object();
  for (std::size_t k = 0; k < diag.names.size(); ++k) slopes[diag.names[k]] = sig_json(diag.slopes[k]);
  j["slopes"] = std::move(slopes);
  j["lambda_slope"] = sig_json(diag.lambda_slope);
  j["identifiable"] = diag.identifiable;
  return j;
}

void write_table(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  auto emit = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Table estimates_table(const FitResult& fit) {
  Table t{{"parameter", "estimate", "std_error", "implied_variance"}, {}};
  for (std::size_t k = 0; k < fit.names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    t.rows.push_back({fit.names[k], cell(fit.estimates(i)), cell(fit.std_errors(i)),
                      is_precision(fit.names[k]) ? cell(1.0 / fit.estimates(i)) : std::string()});
  }
  return t;
}

Table compare_table(const CompareTable& c) {
  Table t;
  t.header.push_back("parameter");
  for (const auto& m : c.models) t.header.push_back(m);
  for (std::size_t k = 0; k < c.parameters.size(); ++k) {
    std::vector<std::string> row{c.parameters[k]};
    for (double v : c.estimates[k]) row.push_back(std::isnan(v) ? std::string() : cell(v));
    t.rows.push_back(std::move(row));
  }
  std::vector<std::string> ll{"Maximised likelihood"};
  for (double v : c.loglik) ll.push_back(cell(v));
  t.rows.push_back(std::move(ll));
  return t;
}

Table lr_table(const CompareTable& c) {
  Table t{{"smaller", "larger", "statistic", "df", "p_value"}, {}};
  for (const auto& lr : c.tests)
    t.rows.push_back({c.models[lr.smaller], c.models[lr.larger], cell(lr.statistic), std::to_string(lr.df),
                      cell(lr.p_value)});
  return t;
}

Table profile_table(const std::vector<ProfileTrace>& traces) {
  Table t{{"parameter", "grid", "grid_reporting", "profile_loglik"}, {}};
  for (const auto& tr : traces)
    for (std::size_t i = 0; i < tr.curve.grid.size(); ++i)
      t.rows.push_back({tr.parameter, cell(tr.curve.grid[i]), cell(tr.grid_reporting[i]), cell(tr.curve.profile[i])});
  return t;
}

Table random_effects_table(const std::vector<GroupPrediction>& predictions) {
  Table t;
  t.header.push_back("group");
  const auto q = predictions.empty() ? 0 : predictions.front().b_hat.size();
  for (Eigen::Index r = 0; r < q; ++r) t.header.push_back("b_" + std::to_string(r + 1));
  for (const auto& p : predictions) {
    std::vector<std::string> row{p.group};
    for (Eigen::Index r = 0; r < p.b_hat.size(); ++r) row.push_back(cell(p.b_hat(r)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table fitted_table(const std::vector<GroupPrediction>& predictions) {
  Table t{{"group", "record", "fitted"}, {}};
  for (const auto& p : predictions)
    for (std::size_t j = 0; j < p.fitted.size(); ++j) t.rows.push_back({p.group, std::to_string(j + 1), cell(p.fitted[j])});
  return t;
}

Table scenario_table(const std::vector<ScenarioCell>& cells) {
  Table t{{"group", "scenario", "mu", "percent_vs_population"}, {}};
  for (const auto& c : cells) t.rows.push_back({c.group, c.scenario, cell(c.mu), cell(c.percent_vs_population)});
  return t;
}

}  // namespace betamix
