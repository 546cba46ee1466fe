#include "betamix/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "betamix/error.hpp"

namespace betamix {

namespace {

using Json = nlohmann::ordered_json;

// Reads fields of one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown key '" + field(key) + "'");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError("field '" + field(key) + "': " + e.what());
    }
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) {
      if (j_.contains(key)) out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = std::move(v);
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : "field '" + path_ + "'"; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("field '" + field + "': " + what);
}

ModelConfig read_model(const Json& j, const std::string& path) {
  ModelConfig m;
  Reader r(j, path);
  r.get("name", m.name);
  r.get("fixed", m.fixed);
  r.get("cov", m.cov);
  r.get("slope", m.slope);
  r.get("group_effect", m.group_effect);
  r.get("link", m.link);
  try {
    (void)cov_kind_from_name(m.cov);
    (void)Link::from_name(m.link);
  } catch (const DomainError& e) {
    throw ConfigError("field '" + path + "': " + e.what());
  }
  return m;
}

Priors read_priors(const Json& j, const std::string& path) {
  Priors p;
  Reader r(j, path);
  r.get("beta_mean", p.beta_mean);
  r.get("beta_precision", p.beta_precision);
  r.get("phi_shape", p.phi_shape);
  r.get("phi_rate", p.phi_rate);
  r.get("tau2_shape", p.tau2_shape);
  r.get("tau2_rate", p.tau2_rate);
  require(p.beta_precision > 0 && p.phi_shape > 0 && p.phi_rate > 0 && p.tau2_shape > 0 && p.tau2_rate > 0, path,
          "prior parameters must be positive");
  return p;
}

Json to_json(const ModelConfig& m) {
  return Json{{"name", m.name}, {"fixed", m.fixed},         {"cov", m.cov},
              {"slope", m.slope}, {"group_effect", m.group_effect}, {"link", m.link}};
}

Json optional_json(const auto& o) { return o ? Json(*o) : Json(nullptr); }

}  // namespace

ModelSpec ModelConfig::build(const Dataset& data) const {
  auto spec = ModelSpec::make(data, fixed, cov_kind_from_name(cov), Link::from_name(link), slope, group_effect);
  spec.name = name;
  return spec;
}

RunConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config ") + e.what());
  }
  RunConfig c;
  Reader r(j, "");
  r.get("command", c.command);
  r.get("data", c.data);
  if (const Json* s = r.child("schema")) {
    Reader rs(*s, "schema");
    rs.get("response", c.schema.response);
    rs.get("covariates", c.schema.covariates);
    rs.get("group", c.schema.group);
    rs.get_optional("subgroup", c.schema.subgroup);
    rs.get("intercept", c.schema.intercept);
  }
  if (const Json* ms = r.child("models")) {
    require(ms->is_array(), "models", "expected an array");
    for (std::size_t i = 0; i < ms->size(); ++i)
      c.models.push_back(read_model(ms->at(i), "models[" + std::to_string(i) + "]"));
  }
  r.get("model", c.model);
  if (const Json* m = r.child("method")) {
    Reader rm(*m, "method");
    std::string name(method_name(c.method.method));
    rm.get("name", name);
    try {
      c.method.method = method_from_name(name);
    } catch (const DomainError& e) {
      throw ConfigError("field 'method.name': " + std::string(e.what()));
    }
    rm.get("nodes", c.method.nodes);
    rm.get("qmc_points", c.method.qmc_points);
  }
  if (const Json* p = r.child("profile")) {
    Reader rp(*p, "profile");
    rp.get("parameters", c.profile.parameters);
    rp.get("level", c.profile.level);
  }
  if (const Json* d = r.child("dc")) {
    Reader rd(*d, "dc");
    rd.get("clones", c.dc.clones);
    rd.get("chains", c.dc.chains);
    rd.get("iters", c.dc.iters);
    rd.get("burnin", c.dc.burnin);
    if (const Json* pr = rd.child("priors")) c.dc.priors = read_priors(*pr, "dc.priors");
  }
  if (const Json* ss = r.child("scenarios")) {
    require(ss->is_array(), "scenarios", "expected an array");
    for (std::size_t i = 0; i < ss->size(); ++i) {
      const std::string path = "scenarios[" + std::to_string(i) + "]";
      ScenarioConfig sc;
      Reader rs(ss->at(i), path);
      rs.get("name", sc.name);
      rs.get("x", sc.x);
      rs.get_optional("subgroup", sc.subgroup);
      c.scenarios.push_back(std::move(sc));
    }
  }
  if (const Json* s = r.child("simulate")) {
    Reader rs(*s, "simulate");
    rs.get("preset", c.simulate.preset);
    rs.get_optional("cov", c.simulate.cov);
    rs.get("group_effect", c.simulate.group_effect);
    rs.get_optional("missing", c.simulate.missing);
    rs.get_optional("truth", c.simulate.truth);
  }
  r.get_optional("seed", c.seed);
  r.get("out", c.out);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_form(const RunConfig& c) {
  Json j;
  j["command"] = c.command;
  j["data"] = c.data;
  j["schema"] = Json{{"response", c.schema.response},
                     {"covariates", c.schema.covariates},
                     {"group", c.schema.group},
                     {"subgroup", optional_json(c.schema.subgroup)},
                     {"intercept", c.schema.intercept}};
  j["models"] = Json::array();
  for (const auto& m : c.models) j["models"].push_back(to_json(m));
  j["model"] = c.model;
  j["method"] = Json{{"name", std::string(method_name(c.method.method))},
                     {"nodes", c.method.nodes},
                     {"qmc_points", c.method.qmc_points}};
  j["profile"] = Json{{"parameters", c.profile.parameters}, {"level", c.profile.level}};
  const auto& p = c.dc.priors;
  j["dc"] = Json{{"clones", c.dc.clones},
                 {"chains", c.dc.chains},
                 {"iters", c.dc.iters},
                 {"burnin", c.dc.burnin},
                 {"priors", Json{{"beta_mean", p.beta_mean},
                                 {"beta_precision", p.beta_precision},
                                 {"phi_shape", p.phi_shape},
                                 {"phi_rate", p.phi_rate},
                                 {"tau2_shape", p.tau2_shape},
                                 {"tau2_rate", p.tau2_rate}}}};
  j["scenarios"] = Json::array();
  for (const auto& s : c.scenarios) {
    Json x = Json::object();
    for (const auto& [k, v] : s.x) x[k] = v;
    j["scenarios"].push_back(Json{{"name", s.name}, {"x", x}, {"subgroup", optional_json(s.subgroup)}});
  }
  j["simulate"] = Json{{"preset", c.simulate.preset},
                       {"cov", optional_json(c.simulate.cov)},
                       {"group_effect", c.simulate.group_effect},
                       {"missing", optional_json(c.simulate.missing)},
                       {"truth", optional_json(c.simulate.truth)}};
  j["seed"] = optional_json(c.seed);
  j["out"] = c.out;
  return j.dump(2) + "\n";
}

bool operator==(const RunConfig& a, const RunConfig& b) { return canonical_form(a) == canonical_form(b); }

}  // namespace betamix
