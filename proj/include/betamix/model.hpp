#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "betamix/beta.hpp"

namespace betamix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Column mapping for CSV ingestion.
struct CsvSchema {
  std::string response = "y";
  std::vector<std::string> covariates;
  std::string group = "group";
  std::optional<std::string> subgroup;
  /// Prepend a constant "(Intercept)" column to the covariates.
  bool intercept = true;
};

struct Record {
  double y = 0.0;
  std::vector<double> x;
  int group = 0;
  int subgroup = -1;
};

/// Observations with strictly-(0,1) responses. Group and subgroup ids are
/// indices into the label tables, numbered in order of first appearance.
struct Dataset {
  CsvSchema schema;
  std::vector<std::string> covariate_names;
  std::vector<std::string> group_labels;
  std::vector<std::string> subgroup_labels;
  std::vector<Record> records;
  std::size_t dropped_count = 0;

  std::size_t n() const { return records.size(); }
  std::size_t p() const { return covariate_names.size(); }
  std::size_t n_groups() const { return group_labels.size(); }
  bool has_subgroups() const { return !subgroup_labels.empty(); }
  /// Index of a covariate column; throws DataError for unknown names.
  std::size_t covariate_index(const std::string& name) const;
  /// Order-sensitive hash of the records, used to check that fits share data.
  std::size_t fingerprint() const;
  /// Throws DataError if any invariant is violated.
  void validate() const;
};

/// Reads a CSV file. Rows whose response cell is empty are dropped and counted.
Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes records (and optionally rows with a missing response, emitted with an
/// empty response cell) using the schema column names. Round-trips through
/// ingest_csv.
void write_csv(const std::filesystem::path& path, const Dataset& data,
               std::span<const Record> missing = {});

enum class CovKind { None, Intercept, InterceptSlope, Nested };

std::string_view cov_kind_name(CovKind kind);
CovKind cov_kind_from_name(std::string_view name);

/// Random-effects covariance with its parameters on the reporting scale.
/// Precisions are the tau^2 values; the implied variances are 1/tau^2.
struct CovStructure {
  CovKind kind = CovKind::None;
  std::vector<double> precisions;
  double rho = 0.0;
  int subgroups = 0;
  bool group_effect = true;
};

struct CovFactor {
  MatrixXd sigma;
  MatrixXd chol;       // lower Cholesky factor of sigma
  MatrixXd precision;  // sigma^{-1}
  double log_det = 0.0;
};

/// Sigma (with its Cholesky factor and inverse) for a covariance structure.
CovFactor cov_matrix(const CovStructure& cov);

class ParamVector;

/// Fixed design (a subset of the dataset covariates), link and random-effects
/// layout. Immutable once built.
struct ModelSpec {
  std::string name;
  std::vector<std::size_t> fixed;
  std::vector<std::string> fixed_names;
  Link link;
  CovKind cov = CovKind::None;
  std::size_t slope_column = 0;
  std::string slope_name;
  int subgroups = 0;
  bool group_effect = true;

  /// Resolves covariate names against a dataset.
  static ModelSpec make(const Dataset& data, std::vector<std::string> fixed_names,
                        CovKind cov = CovKind::None, Link link = Link(),
                        std::string slope_name = {}, bool group_effect = true);

  std::size_t p() const { return fixed.size(); }
  /// Random-effect dimension per group.
  std::size_t q_b() const;
  /// Number of unconstrained covariance parameters.
  std::size_t n_cov_params() const;
  std::size_t n_params() const { return p() + 1 + n_cov_params(); }

  /// Random design row for one record (length q_b).
  void z_row(const Record& r, std::span<double> out) const;
  /// Reporting-scale names: beta names, "phi", then covariance names.
  std::vector<std::string> parameter_names() const;
  std::vector<std::string> cov_parameter_names() const;
};

/// Unconstrained parameters: beta, log phi, and the covariance parameters as
/// log-variances followed by atanh(rho) when present.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(VectorXd beta, double log_phi, VectorXd cov_raw);

  const VectorXd& beta() const { return beta_; }
  double log_phi() const { return log_phi_; }
  double phi() const;
  const VectorXd& cov_raw() const { return cov_raw_; }

  VectorXd pack() const;
  static ParamVector unpack(const ModelSpec& spec, const VectorXd& packed);

  CovStructure cov(const ModelSpec& spec) const;

  /// Reporting scale: beta, phi, precisions tau^2, rho.
  VectorXd to_reporting(const ModelSpec& spec) const;
  static ParamVector from_reporting(const ModelSpec& spec, const VectorXd& reporting);

  friend bool operator==(const ParamVector& a, const ParamVector& b);

 private:
  VectorXd beta_;
  double log_phi_ = 0.0;
  VectorXd cov_raw_;
};

/// Jacobian d(reporting)/d(unconstrained), diagonal, at the given point.
VectorXd reporting_jacobian(const ModelSpec& spec, const ParamVector& theta);

struct Prediction {
  double eta;
  double mu;
};

/// eta = x.beta + z.b and mu = g^{-1}(eta) for one record.
Prediction linear_predictor(const ModelSpec& spec, const VectorXd& beta, const VectorXd& b,
                            const Record& record);

}  // namespace betamix
