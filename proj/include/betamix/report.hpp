#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "betamix/dataclone.hpp"
#include "betamix/estimator.hpp"
#include "betamix/predictor.hpp"

namespace betamix {

using Json = nlohmann::ordered_json;

/// Decimal text with 6 significant digits ("nan" / "inf" for non-finite).
std::string format_sig(double v, int digits = 6);
/// v rounded to 6 significant digits; null for non-finite values.
Json sig_json(double v);

Json fit_summary(const FitResult& fit);
Json compare_summary(const CompareTable& table);
Json profile_summary(const FitResult& fit, const std::vector<ProfileTrace>& traces);
Json dc_summary(const DCDiagnostics& diag);

/// A flat table written as CSV; cells are preformatted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_table(const std::filesystem::path& path, const Table& table);
void write_json(const std::filesystem::path& path, const Json& j);

/// parameter, estimate, std_error, implied_variance (for precisions).
Table estimates_table(const FitResult& fit);
/// One row per parameter plus a "Maximised likelihood" row; one column per model.
Table compare_table(const CompareTable& table);
Table lr_table(const CompareTable& table);
/// parameter, grid, grid_reporting, profile_loglik.
Table profile_table(const std::vector<ProfileTrace>& traces);
/// group, b_1..b_q.
Table random_effects_table(const std::vector<GroupPrediction>& predictions);
/// group, record, fitted.
Table fitted_table(const std::vector<GroupPrediction>& predictions);
Table scenario_table(const std::vector<ScenarioCell>& cells);

}  // namespace betamix
