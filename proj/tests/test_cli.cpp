#include <sys/wait.h>

#include <cstdlib>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <nlohmann/json.hpp>
#include <sstream>

#include "betamix/config.hpp"
#include "betamix/error.hpp"
#include "betamix/estimator.hpp"
#include "betamix/report.hpp"
#include "doctest.h"
#include "scratch.hpp"

using namespace betamix;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code;
  std::string err;
};

Outcome run_cli(const testing::ScratchDir& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.path().string() + "' && '" BETAMIX_CLI "' " + args + " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir / "stderr.txt")};
}

const char* kConfig = R"json({
  "data": "sim/data.csv",
  "schema": {"response": "iqvt", "group": "unit", "covariates": ["medium", "small", "income"]},
  "models": [
    {"name": "M3", "fixed": ["(Intercept)", "medium", "small", "income"]},
    {"name": "M4", "fixed": ["(Intercept)", "medium", "small", "income"], "cov": "intercept"}
  ],
  "profile": {"parameters": ["income", "tau2_1"]},
  "dc": {"clones": [1, 2], "chains": 2, "iters": 300, "burnin": 100},
  "scenarios": [{"name": "large", "x": {}}, {"name": "small", "x": {"small": 1}}],
  "seed": 4
}
)json";

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("config round-trips through its canonical form") {
  const auto c = parse_config(kConfig);
  CHECK(c.models.size() == 2);
  CHECK(c.models[1].cov == "intercept");
  CHECK(c.dc.clones == std::vector<int>{1, 2});
  CHECK(c.scenarios[1].x.at("small") == 1.0);
  CHECK(c.seed == 4u);
  const auto text = canonical_form(c);
  const auto again = parse_config(text);
  CHECK(again == c);
  CHECK(canonical_form(again) == text);
  CHECK(canonical_form(parse_config("{}")) == canonical_form(RunConfig{}));
}

TEST_CASE("config errors name the line or field") {
  auto message = [](const std::string& text) {
    try {
      (void)parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message(R"({"colour": 1})").find("unknown key 'colour'") != std::string::npos);
  CHECK(message(R"({"models": [{"fixed": ["x"], "kov": "none"}]})").find("models[0].kov") != std::string::npos);
  CHECK(message(R"({"dc": {"chains": "three"}})").find("dc.chains") != std::string::npos);
  CHECK(message("{\n  \"seed\": 4,\n  \"out\" \"x\"\n}").find("line 3") != std::string::npos);
  CHECK(message(R"({"method": {"name": "mcmc"}})").find("method") != std::string::npos);
}

TEST_CASE("simulate, fit, compare, profile, predict and dc from the command line") {
  testing::ScratchDir dir("cli");
  REQUIRE(run_cli(dir, "simulate --seed 4 --out sim").code == 0);
  dir.write("run.json", kConfig);

  for (const std::string cmd : {"fit", "compare", "profile", "predict"}) {
    INFO(cmd);
    CHECK(run_cli(dir, cmd + " --config run.json --out " + cmd).code == 0);
  }
  CHECK(run_cli(dir, "dc --config run.json --out dc").code == 0);

  // Fit summary: estimates recover the simulation truth and match the library.
  const auto summary = nlohmann::json::parse(slurp(dir / "fit" / "summary.json"));
  const auto truth = nlohmann::json::parse(slurp(dir / "sim" / "summary.json"))["truth"];
  const auto& m4 = summary["fits"][1];
  CHECK(m4["model"]["name"] == "M4");
  CHECK(m4["converged"] == true);

  const auto data = ingest_csv(dir / "sim" / "data.csv", parse_config(kConfig).schema);
  const auto spec = parse_config(kConfig).models[1].build(data);
  const auto f = fit(data, spec);
  const auto est_rows = split_lines(slurp(dir / "fit" / "estimates.csv"));
  for (std::size_t k = 0; k < f.names.size(); ++k) {
    const auto& p = m4["parameters"][k];
    INFO(f.names[k]);
    CHECK(p["name"] == f.names[k]);
    const double v = p["estimate"].get<double>();
    CHECK(format_sig(v) == format_sig(f.estimates(static_cast<Eigen::Index>(k))));
    CHECK(format_sig(p["std_error"].get<double>()) == format_sig(f.std_errors(static_cast<Eigen::Index>(k))));
    const double se = p["std_error"].get<double>();
    CHECK(std::abs(v - truth[f.names[k]].get<double>()) < 3 * se);
    const std::string row = "M4," + f.names[k] + "," + format_sig(f.estimates(static_cast<Eigen::Index>(k)));
    CHECK(std::find_if(est_rows.begin(), est_rows.end(), [&](const std::string& r) { return r.rfind(row, 0) == 0; }) !=
          est_rows.end());
  }
  CHECK(format_sig(m4["loglik"].get<double>()) == format_sig(f.loglik));

  const auto compare = split_lines(slurp(dir / "compare" / "compare.csv"));
  CHECK(compare.front() == "parameter,M3,M4");
  CHECK(compare.back().rfind("Maximised likelihood,", 0) == 0);
  const auto lr = split_lines(slurp(dir / "compare" / "lr_tests.csv"));
  REQUIRE(lr.size() == 2);
  CHECK(lr[1].rfind("M3,M4,", 0) == 0);

  const auto prof = split_lines(slurp(dir / "profile" / "profile.csv"));
  CHECK(prof.front() == "parameter,grid,grid_reporting,profile_loglik");
  std::map<std::string, std::vector<double>> grids;
  for (std::size_t i = 1; i < prof.size(); ++i) {
    const auto comma = prof[i].find(',');
    grids[prof[i].substr(0, comma)].push_back(std::stod(prof[i].substr(comma + 1)));
  }
  CHECK(grids.size() == 2);
  for (const auto& [name, g] : grids) {
    CHECK(g.size() == 21);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
  }

  for (const char* file : {"random_effects.csv", "fitted.csv", "scenarios.csv", "summary.json"})
    CHECK(fs::exists(dir / "predict" / file));
  for (const char* file : {"chains_K1.csv", "chains_K2.csv", "diagnostics.csv", "summary.json"})
    CHECK(fs::exists(dir / "dc" / file));

  const auto manifest = nlohmann::json::parse(slurp(dir / "fit" / "manifest.json"));
  CHECK(manifest["command"] == "fit");
  CHECK(manifest["config"]["models"].size() == 2);
  CHECK(manifest.contains("wall_time_seconds"));
  CHECK(manifest["version"].is_string());

  // Nothing lands outside the output directories.
  std::set<std::string> entries;
  for (const auto& e : fs::directory_iterator(dir.path())) entries.insert(e.path().filename().string());
  CHECK(entries == std::set<std::string>{"compare", "dc", "fit", "predict", "profile", "run.json", "sim", "stderr.txt",
                                         "stdout.txt"});
}

TEST_CASE("every subcommand is deterministic") {
  testing::ScratchDir dir("cli_det");
  dir.write("run.json", kConfig);
  for (const std::string tag : {"a", "b"}) {
    REQUIRE(run_cli(dir, "simulate --seed 4 --out sim" + tag).code == 0);
    for (const std::string cmd : {"fit", "compare", "profile", "predict", "dc"})
      REQUIRE(run_cli(dir, cmd + " --config run.json --data sim" + tag + "/data.csv --out " + cmd + tag).code == 0);
  }
  for (const std::string cmd : {"sim", "fit", "compare", "profile", "predict", "dc"}) {
    INFO(cmd);
    std::set<std::string> files;
    for (const auto& e : fs::directory_iterator(dir / (cmd + "a"))) files.insert(e.path().filename().string());
    CHECK(files.count("manifest.json") == 1);
    for (const auto& name : files) {
      INFO(name);
      auto a = slurp(dir / (cmd + "a") / name), b = slurp(dir / (cmd + "b") / name);
      if (name == "manifest.json") {
        auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
        ja.erase("wall_time_seconds");
        jb.erase("wall_time_seconds");
        ja["config"].erase("out");
        jb["config"].erase("out");
        ja["config"].erase("data");
        jb["config"].erase("data");
        CHECK(ja == jb);
      } else {
        CHECK(a == b);
      }
    }
  }
}

TEST_CASE("failures map to distinct exit codes") {
  testing::ScratchDir dir("cli_err");
  dir.write("run.json", kConfig);
  fs::create_directories(dir / "sim");
  dir.write("sim/data.csv", "unit,iqvt,medium,small,income\nU1,0.4,0,0,0.1\nU1,1.2,1,0,0.3\nU2,0.5,0,1,-0.2\n");
  auto bad = run_cli(dir, "fit --config run.json --out x");
  CHECK(bad.code == 3);
  CHECK(bad.err.find("row 2 (line 3)") != std::string::npos);
  CHECK(bad.err.find("1.2") != std::string::npos);

  CHECK(run_cli(dir, "fit --config run.json --data nowhere.csv --out x").code == 3);
  CHECK(run_cli(dir, "simulate --out x").code == 2);
  CHECK(run_cli(dir, "dc --config run.json --out x").code != 0);
  CHECK(run_cli(dir, "fit --config missing.json").code == 2);
  CHECK(run_cli(dir, "frobnicate").code == 2);
  CHECK(run_cli(dir, "fit --config run.json --method mcmc").code == 2);
  dir.write("bad.json", "{\n  \"seed\": 4,\n  \"colour\": 1\n}\n");
  const auto unknown = run_cli(dir, "simulate --config bad.json");
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("colour") != std::string::npos);
  dir.write("blocked", "");
  CHECK(run_cli(dir, "simulate --seed 1 --out blocked/sub").code == 5);
}
