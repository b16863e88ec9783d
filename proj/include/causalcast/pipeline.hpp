#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalcast/dataset.hpp"
#include "causalcast/features.hpp"
#include "causalcast/nn.hpp"
#include "causalcast/pcmci.hpp"
#include "causalcast/synthetic.hpp"

namespace causalcast {

/// In-memory VAR data source, used for the bundled synthetic experiments.
struct SyntheticSource {
  synthetic::PlantedGraph graph;
  std::size_t length = 0;
  std::uint64_t seed = 0;
  Date start{1979, 1, 1};
  /// Constant added to named columns after simulation.
  std::vector<std::pair<std::string, double>> offsets;
};

struct DataSource {
  Frequency frequency = Frequency::Monthly;
  std::optional<std::filesystem::path> path;
  std::optional<SyntheticSource> synthetic;
  std::vector<FeatureMethod> variants;
  /// False: the source only feeds discovery (e.g. daily PCMCI+ for DPCMCIplus).
  bool forecast = true;
  /// Rows per lead unit; a daily source forecasting month leads uses 30.
  std::size_t lead_step = 1;
};

struct DiscoveryConfig {
  std::size_t max_lag = 21;
  double mvgc_alpha = 0.05;
  double pc_alpha = 0.05;
  bool fdr = true;
  std::size_t max_samples = 8000;
};

struct ModelConfig {
  std::size_t gru_hidden = 64;
  std::size_t lstm_hidden = 128;
  std::size_t dense = 64;
  double dropout = 0.2;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string target;
  std::size_t lookback = 21;
  std::vector<std::size_t> leads{1, 2, 3, 4, 5, 6};
  std::optional<DataSource> daily;
  std::optional<DataSource> monthly;
  SplitSpec split;
  DiscoveryConfig discovery;
  nn::TrainConfig training;
  ModelConfig model;
  std::filesystem::path output_dir = "out";
  unsigned jobs = 1;

  /// Throws ConfigError naming the offending key path.
  void validate() const;
};

/// Parses and validates a config object. Relative data paths resolve against
/// `base_dir`. Errors are ConfigError with the key path in the message.
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

struct EvalRecord {
  std::string frequency;
  std::string variant;
  std::size_t lead = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double rmse_pct = 0.0;
  double mae_pct = 0.0;
  double r2 = 0.0;
  std::size_t n_test = 0;
};

struct CellFailure {
  std::string frequency;
  std::string variant;
  std::size_t lead = 0;
  std::string error;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<CellFailure> failures;
};

std::string report_csv(const EvalReport& report);
nlohmann::json to_json(const EvalReport& report);
/// Lead-time rows with an RMSE (%) and MAE (%) line per lead and one column
/// per variant.
std::string metrics_table_csv(const EvalReport& report, const std::string& frequency);
/// Plot-ready R² by lead, one column per variant.
std::string r2_series_csv(const EvalReport& report, const std::string& frequency);

/// Loads (or generates) a source and imputes missing values.
TimeSeriesDataset load_source(const DataSource& source, const std::string& target);

struct ExperimentResult {
  EvalReport report;
  std::vector<std::filesystem::path> artifacts;
};

/// Discovery, then one model per (variant, lead), then evaluation on the test
/// range. Writes reports, graphs and checkpoints under config.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::function<void(const std::string&)>& progress = {});

}  // namespace causalcast
