#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "causalcast/date.hpp"

namespace causalcast {

enum class Frequency { Daily, Monthly };

std::string_view to_string(Frequency f);
Frequency parse_frequency(std::string_view text);

/// Timestamped multivariate series, T rows by N variables. Missing cells are
/// stored as quiet NaN. Immutable once constructed; the constructor checks
/// shape, ordering and calendar spacing.
class TimeSeriesDataset {
 public:
  TimeSeriesDataset(std::vector<std::string> variable_names, std::vector<Date> timestamps,
                    Eigen::MatrixXd values, Frequency frequency, std::string target_name);

  const std::vector<std::string>& variable_names() const { return names_; }
  const std::vector<Date>& timestamps() const { return dates_; }
  const Eigen::MatrixXd& values() const { return values_; }
  Frequency frequency() const { return frequency_; }
  const std::string& target_name() const { return target_; }

  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
  std::size_t target_index() const { return target_index_; }

  /// Throws `Error(UnknownVariable)` if absent.
  std::size_t column_index(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;

  bool is_missing(std::size_t row, std::size_t col) const;
  std::size_t missing_count() const;
  std::size_t missing_count(std::size_t col) const;

  /// Rows [begin, end).
  TimeSeriesDataset slice_rows(std::size_t begin, std::size_t end) const;
  /// Rows with timestamp <= `last`.
  TimeSeriesDataset truncate_after(const Date& last) const;
  /// The most recent `count` rows (all rows when count >= T).
  TimeSeriesDataset tail(std::size_t count) const;
  /// Same rows, different values (shape must match).
  TimeSeriesDataset with_values(Eigen::MatrixXd values) const;

 private:
  std::vector<std::string> names_;
  std::vector<Date> dates_;
  Eigen::MatrixXd values_;
  Frequency frequency_;
  std::string target_;
  std::size_t target_index_ = 0;
};

// ---------------------------------------------------------------------------
// CSV I/O

/// Reads `date,<var1>,...,<varN>`. Empty cells are missing. Rows are sorted
/// by date; calendar gaps are filled with all-missing rows.
TimeSeriesDataset load_csv(const std::filesystem::path& path, std::string_view target_name,
                           Frequency frequency);
TimeSeriesDataset parse_csv(std::istream& in, std::string_view target_name, Frequency frequency);

/// Writes the canonical CSV form (17 significant digits, empty = missing).
void write_csv(const TimeSeriesDataset& dataset, std::ostream& out);
void save_csv(const TimeSeriesDataset& dataset, const std::filesystem::path& path);

/// Per-variable min/max/mean and missing counts, plus the date range.
nlohmann::json dataset_summary(const TimeSeriesDataset& dataset);

// ---------------------------------------------------------------------------
// Preprocessing

/// Linear interpolation between observed neighbours, nearest-value fill at
/// the edges.
TimeSeriesDataset impute(const TimeSeriesDataset& dataset);

/// Calendar-month means, stamped on the first day of each month.
TimeSeriesDataset aggregate_daily_to_monthly(const TimeSeriesDataset& dataset);

struct SplitSpec {
  Date train_end;
  double validation_fraction = 0.1;
  Date test_begin;
  Date test_end;

  void validate() const;
};

struct NormalizationStats {
  std::vector<std::string> variables;
  std::vector<double> mean;
  std::vector<double> std;  // population standard deviation
  Date fitted_from;
  Date fitted_to;

  std::size_t index_of(std::string_view variable) const;
};

/// Mean and population std over rows with timestamp <= split.train_end.
NormalizationStats fit_normalization(const TimeSeriesDataset& dataset, const SplitSpec& split);

/// z-scores each column; columns with std == 0 become 0.
TimeSeriesDataset apply_normalization(const TimeSeriesDataset& dataset,
                                      const NormalizationStats& stats);

std::vector<double> invert_normalization(std::span<const double> values,
                                         const NormalizationStats& stats,
                                         std::string_view variable);

nlohmann::json to_json(const NormalizationStats& stats);
NormalizationStats normalization_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Supervised windows

/// S samples of `lookback` consecutive rows over `feature_names`, each paired
/// with the target value `lead` rows after the window's last row.
struct LagWindowSet {
  std::size_t lookback = 0;
  std::size_t lead = 0;
  std::vector<std::string> feature_names;
  std::vector<double> inputs;   // S x lookback x F, row-major
  std::vector<double> targets;  // S
  std::vector<Date> sample_dates;

  std::size_t size() const { return targets.size(); }
  std::size_t feature_count() const { return feature_names.size(); }
  std::span<const double> window(std::size_t s) const;

  LagWindowSet subset(std::span<const std::size_t> indices) const;
};

LagWindowSet build_lag_windows(const TimeSeriesDataset& dataset,
                               std::span<const std::string> features, std::size_t lookback,
                               std::size_t lead);

struct WindowSplit {
  LagWindowSet train;
  LagWindowSet validation;
  LagWindowSet test;
};

WindowSplit split_windows(const LagWindowSet& windows, const SplitSpec& split);

}  // namespace causalcast
