#include "betamix/model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "betamix/error.hpp"

namespace betamix {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  for (auto& s : cells) {
    const auto first = s.find_first_not_of(" \t");
    const auto last = s.find_last_not_of(" \t");
    s = first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
  }
  return cells;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, ptr);
}

int intern(std::vector<std::string>& labels, std::unordered_map<std::string, int>& index,
           const std::string& label) {
  auto [it, inserted] = index.try_emplace(label, static_cast<int>(labels.size()));
  if (inserted) labels.push_back(label);
  return it->second;
}

}  // namespace

std::size_t Dataset::covariate_index(const std::string& name) const {
  auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
  if (it == covariate_names.end()) throw DataError("unknown covariate '" + name + "'");
  return static_cast<std::size_t>(it - covariate_names.begin());
}

std::size_t Dataset::fingerprint() const {
  std::size_t h = records.size();
  auto mix = [&h](std::uint64_t v) { h ^= std::hash<std::uint64_t>{}(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
  for (const auto& r : records) {
    mix(std::bit_cast<std::uint64_t>(r.y));
    for (double x : r.x) mix(std::bit_cast<std::uint64_t>(x));
    mix(static_cast<std::uint64_t>(r.group));
    mix(static_cast<std::uint64_t>(r.subgroup + 1));
  }
  return h;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!(r.y > 0.0 && r.y < 1.0))
      throw DataError("record " + std::to_string(i + 1) + ": response outside (0,1)");
    if (r.x.size() != p())
      throw DataError("record " + std::to_string(i + 1) + ": covariate length mismatch");
    if (r.group < 0 || static_cast<std::size_t>(r.group) >= n_groups())
      throw DataError("record " + std::to_string(i + 1) + ": invalid group");
    if (has_subgroups() != (r.subgroup >= 0))
      throw DataError("record " + std::to_string(i + 1) + ": subgroup present on some records only");
  }
}

Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  const auto header = split_csv_line(line);
  auto column = [&header](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("unknown column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t y_col = column(schema.response);
  const std::size_t g_col = column(schema.group);
  std::optional<std::size_t> s_col;
  if (schema.subgroup) s_col = column(*schema.subgroup);
  std::vector<std::size_t> x_cols;
  for (const auto& c : schema.covariates) x_cols.push_back(column(c));

  Dataset data;
  data.schema = schema;
  if (schema.intercept) data.covariate_names.push_back("(Intercept)");
  for (const auto& c : schema.covariates) data.covariate_names.push_back(c);

  std::unordered_map<std::string, int> group_index, subgroup_index;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = "row " + std::to_string(row) + " (line " + std::to_string(row + 1) + ")";
    if (cells.size() != header.size())
      throw DataError(where + ": expected " + std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    if (cells[y_col].empty()) {
      ++data.dropped_count;
      continue;
    }
    Record rec;
    auto y = parse_double(cells[y_col]);
    if (!y) throw DataError(where + ": response '" + cells[y_col] + "' is not a number");
    if (!(*y > 0.0 && *y < 1.0))
      throw DataError(where + ": response " + cells[y_col] + " outside (0,1)");
    rec.y = *y;
    if (schema.intercept) rec.x.push_back(1.0);
    for (std::size_t k = 0; k < x_cols.size(); ++k) {
      auto v = parse_double(cells[x_cols[k]]);
      if (!v || !std::isfinite(*v))
        throw DataError(where + ": covariate '" + schema.covariates[k] + "' value '" +
                        cells[x_cols[k]] + "' is not a finite number");
      rec.x.push_back(*v);
    }
    if (cells[g_col].empty()) throw DataError(where + ": empty group id");
    rec.group = intern(data.group_labels, group_index, cells[g_col]);
    if (s_col) {
      if (cells[*s_col].empty()) throw DataError(where + ": empty subgroup id");
      rec.subgroup = intern(data.subgroup_labels, subgroup_index, cells[*s_col]);
    }
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) throw DataError("'" + path.string() + "' has no usable rows");
  return data;
}

void write_csv(const std::filesystem::path& path, const Dataset& data, std::span<const Record> missing) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const auto& s = data.schema;
  out << s.group;
  if (s.subgroup) out << ',' << *s.subgroup;
  out << ',' << s.response;
  for (const auto& c : s.covariates) out << ',' << c;
  out << '\n';
  const std::size_t offset = s.intercept ? 1 : 0;
  auto emit = [&](const Record& r, bool has_y) {
    out << data.group_labels.at(r.group);
    if (s.subgroup) out << ',' << data.subgroup_labels.at(r.subgroup);
    out << ',' << (has_y ? format_double(r.y) : std::string());
    for (std::size_t k = offset; k < r.x.size(); ++k) out << ',' << format_double(r.x[k]);
    out << '\n';
  };
  for (const auto& r : data.records) emit(r, true);
  for (const auto& r : missing) emit(r, false);
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string_view cov_kind_name(CovKind kind) {
  switch (kind) {
    case CovKind::None: return "none";
    case CovKind::Intercept: return "intercept";
    case CovKind::InterceptSlope: return "intercept_slope";
    case CovKind::Nested: return "nested";
  }
  return "none";
}

CovKind cov_kind_from_name(std::string_view name) {
  if (name == "none") return CovKind::None;
  if (name == "intercept") return CovKind::Intercept;
  if (name == "intercept_slope") return CovKind::InterceptSlope;
  if (name == "nested") return CovKind::Nested;
  throw DomainError("unknown covariance kind '" + std::string(name) + "'");
}

CovFactor cov_matrix(const CovStructure& cov) {
  for (double t : cov.precisions)
    if (!std::isfinite(t) || t <= 0.0) throw DomainError("precision parameters must be positive");
  CovFactor f;
  switch (cov.kind) {
    case CovKind::None:
      f.sigma.resize(0, 0);
      break;
    case CovKind::Intercept:
      if (cov.precisions.size() != 1) throw DomainError("intercept covariance takes one precision");
      f.sigma = MatrixXd::Constant(1, 1, 1.0 / cov.precisions[0]);
      break;
    case CovKind::InterceptSlope: {
      if (cov.precisions.size() != 2) throw DomainError("intercept-slope covariance takes two precisions");
      if (!(std::abs(cov.rho) < 1.0)) throw DomainError("correlation must lie in (-1,1)");
      const double t1 = cov.precisions[0], t2 = cov.precisions[1];
      f.sigma.resize(2, 2);
      f.sigma << 1.0 / t1, cov.rho / std::sqrt(t1 * t2), cov.rho / std::sqrt(t1 * t2), 1.0 / t2;
      break;
    }
    case CovKind::Nested: {
      if (cov.subgroups < 1) throw DomainError("nested covariance needs at least one subgroup");
      const std::size_t expected = cov.group_effect ? 2 : 1;
      if (cov.precisions.size() != expected) throw DomainError("nested covariance precision count mismatch");
      const int lead = cov.group_effect ? 1 : 0;
      f.sigma = MatrixXd::Zero(lead + cov.subgroups, lead + cov.subgroups);
      if (cov.group_effect) f.sigma(0, 0) = 1.0 / cov.precisions[0];
      for (int t = 0; t < cov.subgroups; ++t) f.sigma(lead + t, lead + t) = 1.0 / cov.precisions.back();
      break;
    }
  }
  const auto q = f.sigma.rows();
  if (q == 0) {
    f.chol.resize(0, 0);
    f.precision.resize(0, 0);
    return f;
  }
  Eigen::LLT<MatrixXd> llt(f.sigma);
  if (llt.info() != Eigen::Success) throw DomainError("covariance matrix is not positive definite");
  f.chol = llt.matrixL();
  f.precision = llt.solve(MatrixXd::Identity(q, q));
  f.log_det = 2.0 * f.chol.diagonal().array().log().sum();
  return f;
}

ModelSpec ModelSpec::make(const Dataset& data, std::vector<std::string> fixed_names, CovKind cov, Link link,
                          std::string slope_name, bool group_effect) {
  ModelSpec s;
  for (const auto& n : fixed_names) s.fixed.push_back(data.covariate_index(n));
  s.fixed_names = std::move(fixed_names);
  s.link = link;
  s.cov = cov;
  if (cov == CovKind::InterceptSlope) {
    if (slope_name.empty()) throw DataError("intercept-slope covariance needs a slope covariate");
    s.slope_column = data.covariate_index(slope_name);
    s.slope_name = std::move(slope_name);
  }
  if (cov == CovKind::Nested) {
    if (!data.has_subgroups()) throw DataError("nested covariance needs a subgroup column");
    s.subgroups = static_cast<int>(data.subgroup_labels.size());
    s.group_effect = group_effect;
  }
  return s;
}

std::size_t ModelSpec::q_b() const {
  switch (cov) {
    case CovKind::None: return 0;
    case CovKind::Intercept: return 1;
    case CovKind::InterceptSlope: return 2;
    case CovKind::Nested: return static_cast<std::size_t>(subgroups) + (group_effect ? 1 : 0);
  }
  return 0;
}

std::size_t ModelSpec::n_cov_params() const {
  switch (cov) {
    case CovKind::None: return 0;
    case CovKind::Intercept: return 1;
    case CovKind::InterceptSlope: return 3;
    case CovKind::Nested: return group_effect ? 2 : 1;
  }
  return 0;
}

void ModelSpec::z_row(const Record& r, std::span<double> out) const {
  switch (cov) {
    case CovKind::None:
      break;
    case CovKind::Intercept:
      out[0] = 1.0;
      break;
    case CovKind::InterceptSlope:
      out[0] = 1.0;
      out[1] = r.x[slope_column];
      break;
    case CovKind::Nested: {
      std::fill(out.begin(), out.end(), 0.0);
      const int lead = group_effect ? 1 : 0;
      if (group_effect) out[0] = 1.0;
      if (r.subgroup < 0 || r.subgroup >= subgroups) throw DataError("record subgroup out of range");
      out[lead + r.subgroup] = 1.0;
      break;
    }
  }
}

std::vector<std::string> ModelSpec::cov_parameter_names() const {
  switch (cov) {
    case CovKind::None: return {};
    case CovKind::Intercept: return {"tau2_1"};
    case CovKind::InterceptSlope: return {"tau2_1", "tau2_2", "rho"};
    case CovKind::Nested:
      if (group_effect) return {"tau2_U", "tau2_UT"};
      return {"tau2_UT"};
  }
  return {};
}

std::vector<std::string> ModelSpec::parameter_names() const {
  auto names = fixed_names;
  names.push_back("phi");
  for (auto& c : cov_parameter_names()) names.push_back(std::move(c));
  return names;
}

ParamVector::ParamVector(VectorXd beta, double log_phi, VectorXd cov_raw)
    : beta_(std::move(beta)), log_phi_(log_phi), cov_raw_(std::move(cov_raw)) {}

double ParamVector::phi() const { return std::exp(log_phi_); }

VectorXd ParamVector::pack() const {
  VectorXd v(beta_.size() + 1 + cov_raw_.size());
  v << beta_, log_phi_, cov_raw_;
  return v;
}

ParamVector ParamVector::unpack(const ModelSpec& spec, const VectorXd& packed) {
  if (static_cast<std::size_t>(packed.size()) != spec.n_params())
    throw DomainError("parameter vector length does not match the model");
  const auto p = static_cast<Eigen::Index>(spec.p());
  return ParamVector(packed.head(p), packed(p), packed.tail(spec.n_cov_params()));
}

CovStructure ParamVector::cov(const ModelSpec& spec) const {
  CovStructure c;
  c.kind = spec.cov;
  c.subgroups = spec.subgroups;
  c.group_effect = spec.group_effect;
  if (static_cast<std::size_t>(cov_raw_.size()) != spec.n_cov_params())
    throw DomainError("covariance parameter count does not match the model");
  switch (spec.cov) {
    case CovKind::None:
      break;
    case CovKind::Intercept:
      c.precisions = {std::exp(-cov_raw_(0))};
      break;
    case CovKind::InterceptSlope:
      c.precisions = {std::exp(-cov_raw_(0)), std::exp(-cov_raw_(1))};
      c.rho = std::tanh(cov_raw_(2));
      break;
    case CovKind::Nested:
      for (Eigen::Index k = 0; k < cov_raw_.size(); ++k) c.precisions.push_back(std::exp(-cov_raw_(k)));
      break;
  }
  return c;
}

VectorXd ParamVector::to_reporting(const ModelSpec& spec) const {
  VectorXd r = pack();
  const auto p = static_cast<Eigen::Index>(spec.p());
  r(p) = std::exp(log_phi_);
  for (Eigen::Index k = 0; k < cov_raw_.size(); ++k) {
    const bool is_rho = spec.cov == CovKind::InterceptSlope && k == 2;
    r(p + 1 + k) = is_rho ? std::tanh(cov_raw_(k)) : std::exp(-cov_raw_(k));
  }
  return r;
}

ParamVector ParamVector::from_reporting(const ModelSpec& spec, const VectorXd& reporting) {
  if (static_cast<std::size_t>(reporting.size()) != spec.n_params())
    throw DomainError("reporting vector length does not match the model");
  VectorXd u = reporting;
  const auto p = static_cast<Eigen::Index>(spec.p());
  if (!(reporting(p) > 0.0)) throw DomainError("phi must be positive");
  u(p) = std::log(reporting(p));
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(spec.n_cov_params()); ++k) {
    const double v = reporting(p + 1 + k);
    const bool is_rho = spec.cov == CovKind::InterceptSlope && k == 2;
    if (is_rho) {
      if (!(std::abs(v) < 1.0)) throw DomainError("rho must lie in (-1,1)");
      u(p + 1 + k) = std::atanh(v);
    } else {
      if (!(v > 0.0)) throw DomainError("precision parameters must be positive");
      u(p + 1 + k) = -std::log(v);
    }
  }
  return unpack(spec, u);
}

bool operator==(const ParamVector& a, const ParamVector& b) {
  return a.beta_.size() == b.beta_.size() && a.cov_raw_.size() == b.cov_raw_.size() &&
         a.beta_ == b.beta_ && a.log_phi_ == b.log_phi_ && a.cov_raw_ == b.cov_raw_;
}

VectorXd reporting_jacobian(const ModelSpec& spec, const ParamVector& theta) {
  const VectorXd r = theta.to_reporting(spec);
  VectorXd j = VectorXd::Ones(r.size());
  const auto p = static_cast<Eigen::Index>(spec.p());
  j(p) = r(p);
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(spec.n_cov_params()); ++k) {
    const bool is_rho = spec.cov == CovKind::InterceptSlope && k == 2;
    const double v = r(p + 1 + k);
    j(p + 1 + k) = is_rho ? 1.0 - v * v : -v;
  }
  return j;
}

Prediction linear_predictor(const ModelSpec& spec, const VectorXd& beta, const VectorXd& b, const Record& record) {
  if (static_cast<std::size_t>(beta.size()) != spec.p()) throw DomainError("beta length mismatch");
  if (static_cast<std::size_t>(b.size()) != spec.q_b()) throw DomainError("random effect length mismatch");
  double eta = 0.0;
  for (std::size_t k = 0; k < spec.p(); ++k) {
    if (spec.fixed[k] >= record.x.size()) throw DomainError("record has too few covariates");
    eta += record.x[spec.fixed[k]] * beta(static_cast<Eigen::Index>(k));
  }
  if (spec.q_b() > 0) {
    std::vector<double> z(spec.q_b());
    spec.z_row(record, z);
    for (std::size_t k = 0; k < z.size(); ++k) eta += z[k] * b(static_cast<Eigen::Index>(k));
  }
  return {eta, spec.link.invert(eta)};
}

}  // namespace betamix
