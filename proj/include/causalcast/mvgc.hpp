#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "causalcast/dataset.hpp"
#include "causalcast/features.hpp"

namespace causalcast {

/// Conditional Granger test of one variable into the target.
/// d1 = restricted coefficients, d2 = residual dof of the full model.
struct GrangerResult {
  std::string variable;
  double f_statistic = 0.0;
  double p_value = 1.0;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  bool selected = false;
};

struct MvgcOptions {
  std::size_t max_lag = 21;
  double alpha = 0.05;
  /// Benjamini-Hochberg across the per-variable tests; otherwise p <= alpha.
  bool fdr = true;
  unsigned jobs = 1;
};

struct MvgcReport {
  std::string target;
  std::vector<std::string> variables;  // dataset column order
  std::size_t max_lag = 0;
  double alpha = 0.05;
  std::size_t n_obs = 0;
  std::vector<GrangerResult> results;  // non-target variables, column order
  std::vector<std::string> warnings;
};

/// Fits only the target's VAR equation: an intercept plus lags 1..max_lag of
/// every variable. Each non-target variable's lags are dropped in turn and
/// the RSS increase is F-tested.
MvgcReport mvgc_test(const TimeSeriesDataset& dataset, std::string_view target,
                     const MvgcOptions& options = {});

FeatureSet select_features_gc(const MvgcReport& report);

nlohmann::json to_json(const MvgcReport& report);
MvgcReport mvgc_report_from_json(const nlohmann::json& j);

}  // namespace causalcast
