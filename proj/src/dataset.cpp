#include "causalcast/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "causalcast/error.hpp"

namespace causalcast {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

bool consistent_step(const Date& prev, const Date& next, Frequency f) {
  if (f == Frequency::Daily) return prev.days_until(next) == 1;
  return prev.months_until(next) == 1;
}

}  // namespace

std::string_view to_string(Frequency f) { return f == Frequency::Daily ? "daily" : "monthly"; }

Frequency parse_frequency(std::string_view text) {
  if (text == "daily" || text == "Daily" || text == "D") return Frequency::Daily;
  if (text == "monthly" || text == "Monthly" || text == "M") return Frequency::Monthly;
  throw Error(ErrorCode::InvalidArgument, "unknown frequency '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

TimeSeriesDataset::TimeSeriesDataset(std::vector<std::string> variable_names,
                                     std::vector<Date> timestamps, Eigen::MatrixXd values,
                                     Frequency frequency, std::string target_name)
    : names_(std::move(variable_names)),
      dates_(std::move(timestamps)),
      values_(std::move(values)),
      frequency_(frequency),
      target_(std::move(target_name)) {
  if (static_cast<std::size_t>(values_.cols()) != names_.size() ||
      static_cast<std::size_t>(values_.rows()) != dates_.size()) {
    throw Error(ErrorCode::ShapeError, "values are " + std::to_string(values_.rows()) + "x" +
                                           std::to_string(values_.cols()) + " but dataset has " +
                                           std::to_string(dates_.size()) + " timestamps and " +
                                           std::to_string(names_.size()) + " variables");
  }
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (!seen.insert(n).second) throw Error(ErrorCode::InvalidArgument, "duplicate variable '" + n + "'");
  }
  const auto it = std::find(names_.begin(), names_.end(), target_);
  if (it == names_.end()) throw Error(ErrorCode::UnknownTarget, "target '" + target_ + "' not among variables");
  target_index_ = static_cast<std::size_t>(it - names_.begin());

  for (std::size_t t = 1; t < dates_.size(); ++t) {
    if (dates_[t] == dates_[t - 1]) throw Error(ErrorCode::DuplicateTimestamp, dates_[t].iso());
    if (dates_[t] < dates_[t - 1]) {
      throw Error(ErrorCode::InvalidArgument, "timestamps not increasing at " + dates_[t].iso());
    }
    if (!consistent_step(dates_[t - 1], dates_[t], frequency_)) {
      throw Error(ErrorCode::IrregularSpacing, dates_[t - 1].iso() + " -> " + dates_[t].iso() +
                                                   " is not one " +
                                                   (frequency_ == Frequency::Daily ? "day" : "month"));
    }
  }
}

std::optional<std::size_t> TimeSeriesDataset::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t TimeSeriesDataset::column_index(std::string_view name) const {
  if (auto idx = find_column(name)) return *idx;
  throw Error(ErrorCode::UnknownVariable, "no variable named '" + std::string(name) + "'");
}

bool TimeSeriesDataset::is_missing(std::size_t row, std::size_t col) const {
  return std::isnan(values_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)));
}

std::size_t TimeSeriesDataset::missing_count(std::size_t col) const {
  return static_cast<std::size_t>(values_.col(static_cast<Eigen::Index>(col)).array().isNaN().count());
}

std::size_t TimeSeriesDataset::missing_count() const {
  return static_cast<std::size_t>(values_.array().isNaN().count());
}

TimeSeriesDataset TimeSeriesDataset::slice_rows(std::size_t begin, std::size_t end) const {
  end = std::min(end, rows());
  begin = std::min(begin, end);
  const auto n = static_cast<Eigen::Index>(end - begin);
  return {names_,
          std::vector<Date>(dates_.begin() + static_cast<long>(begin), dates_.begin() + static_cast<long>(end)),
          values_.middleRows(static_cast<Eigen::Index>(begin), n),
          frequency_,
          target_};
}

TimeSeriesDataset TimeSeriesDataset::truncate_after(const Date& last) const {
  const auto end = std::upper_bound(dates_.begin(), dates_.end(), last) - dates_.begin();
  return slice_rows(0, static_cast<std::size_t>(end));
}

TimeSeriesDataset TimeSeriesDataset::tail(std::size_t count) const {
  return count >= rows() ? *this : slice_rows(rows() - count, rows());
}

TimeSeriesDataset TimeSeriesDataset::with_values(Eigen::MatrixXd values) const {
  return {names_, dates_, std::move(values), frequency_, target_};
}

// ---------------------------------------------------------------------------
// CSV

TimeSeriesDataset parse_csv(std::istream& in, std::string_view target_name, Frequency frequency) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, 0, "empty input, expected a header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);  // BOM
  const auto header = split_commas(line);
  if (header.size() < 2) throw ParseError(0, 0, "header needs a date column and at least one variable");
  std::vector<std::string> names;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty()) throw ParseError(0, c, "empty variable name");
    names.emplace_back(header[c]);
  }
  if (std::find(names.begin(), names.end(), target_name) == names.end()) {
    throw Error(ErrorCode::UnknownTarget, "target '" + std::string(target_name) + "' not in CSV header");
  }

  struct Row {
    Date date;
    std::vector<double> cells;
  };
  std::vector<Row> rows;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw ParseError(row_no, std::min(cells.size(), header.size()),
                       "expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()));
    }
    Row r;
    try {
      r.date = Date::parse(cells[0]);
    } catch (const Error&) {
      throw ParseError(row_no, 0, "bad date '" + std::string(cells[0]) + "'");
    }
    r.cells.resize(names.size());
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto cell = cells[c];
      if (cell.empty()) {
        r.cells[c - 1] = kMissing;
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || std::isinf(v)) {
        throw ParseError(row_no, c, "non-numeric value '" + std::string(cell) + "'");
      }
      r.cells[c - 1] = std::isnan(v) ? kMissing : v;
    }
    rows.push_back(std::move(r));
  }

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
  for (std::size_t t = 1; t < rows.size(); ++t) {
    const bool dup = frequency == Frequency::Daily ? rows[t].date == rows[t - 1].date
                                                   : rows[t - 1].date.months_until(rows[t].date) == 0;
    if (dup) throw Error(ErrorCode::DuplicateTimestamp, rows[t].date.iso());
  }

  // Calendar gaps become all-missing rows so spacing stays regular.
  std::vector<Date> dates;
  std::vector<const Row*> source;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (t > 0) {
      const Date& prev = rows[t - 1].date;
      const long gap = frequency == Frequency::Daily ? prev.days_until(rows[t].date)
                                                     : prev.months_until(rows[t].date);
      for (long k = 1; k < gap; ++k) {
        dates.push_back(frequency == Frequency::Daily ? prev.plus_days(k) : prev.plus_months(int(k)));
        source.push_back(nullptr);
      }
    }
    dates.push_back(rows[t].date);
    source.push_back(&rows[t]);
  }

  Eigen::MatrixXd values(static_cast<Eigen::Index>(dates.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t t = 0; t < dates.size(); ++t) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = source[t] ? source[t]->cells[c] : kMissing;
    }
  }
  return {std::move(names), std::move(dates), std::move(values), frequency, std::string(target_name)};
}

TimeSeriesDataset load_csv(const std::filesystem::path& path, std::string_view target_name,
                           Frequency frequency) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_csv(in, target_name, frequency);
}

void write_csv(const TimeSeriesDataset& dataset, std::ostream& out) {
  out << "date";
  for (const auto& n : dataset.variable_names()) out << ',' << n;
  out << '\n';
  char buf[40];
  for (std::size_t t = 0; t < dataset.rows(); ++t) {
    out << dataset.timestamps()[t].iso();
    for (std::size_t c = 0; c < dataset.cols(); ++c) {
      out << ',';
      const double v = dataset.values()(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
      if (!std::isnan(v)) {
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, res.ptr - buf);
      }
    }
    out << '\n';
  }
}

void save_csv(const TimeSeriesDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_csv(dataset, out);
}

nlohmann::json dataset_summary(const TimeSeriesDataset& dataset) {
  nlohmann::json vars = nlohmann::json::array();
  for (std::size_t c = 0; c < dataset.cols(); ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < dataset.rows(); ++t) {
      const double v = dataset.values()(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
      if (std::isnan(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
      ++n;
    }
    nlohmann::json entry{{"name", dataset.variable_names()[c]}, {"missing", dataset.missing_count(c)}};
    if (n > 0) {
      entry["min"] = lo;
      entry["max"] = hi;
      entry["mean"] = sum / double(n);
    } else {
      entry["min"] = entry["max"] = entry["mean"] = nullptr;
    }
    vars.push_back(std::move(entry));
  }
  nlohmann::json j{{"rows", dataset.rows()},
                   {"frequency", to_string(dataset.frequency())},
                   {"target", dataset.target_name()},
                   {"missing", dataset.missing_count()},
                   {"variables", std::move(vars)}};
  if (dataset.rows() > 0) {
    j["start"] = dataset.timestamps().front().iso();
    j["end"] = dataset.timestamps().back().iso();
  }
  return j;
}

// ---------------------------------------------------------------------------
// Preprocessing

TimeSeriesDataset impute(const TimeSeriesDataset& dataset) {
  Eigen::MatrixXd out = dataset.values();
  const auto T = out.rows();
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    std::vector<Eigen::Index> seen;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (!std::isnan(out(t, c))) seen.push_back(t);
    }
    if (seen.empty()) {
      throw Error(ErrorCode::AllMissingColumn, "'" + dataset.variable_names()[std::size_t(c)] + "' has no observed values");
    }
    for (Eigen::Index t = 0; t < seen.front(); ++t) out(t, c) = out(seen.front(), c);
    for (Eigen::Index t = seen.back() + 1; t < T; ++t) out(t, c) = out(seen.back(), c);
    for (std::size_t k = 1; k < seen.size(); ++k) {
      const Eigen::Index a = seen[k - 1], b = seen[k];
      const double va = out(a, c), vb = out(b, c);
      for (Eigen::Index t = a + 1; t < b; ++t) {
        const double w = double(t - a) / double(b - a);
        out(t, c) = va + w * (vb - va);
      }
    }
  }
  return dataset.with_values(std::move(out));
}

TimeSeriesDataset aggregate_daily_to_monthly(const TimeSeriesDataset& dataset) {
  if (dataset.frequency() != Frequency::Daily) {
    throw Error(ErrorCode::InvalidArgument, "aggregation expects a daily dataset");
  }
  const auto N = static_cast<Eigen::Index>(dataset.cols());
  std::vector<Date> months;
  std::vector<Eigen::VectorXd> sums, counts;
  for (std::size_t t = 0; t < dataset.rows(); ++t) {
    const Date m = dataset.timestamps()[t].first_of_month();
    if (months.empty() || months.back() != m) {
      months.push_back(m);
      sums.push_back(Eigen::VectorXd::Zero(N));
      counts.push_back(Eigen::VectorXd::Zero(N));
    }
    for (Eigen::Index c = 0; c < N; ++c) {
      const double v = dataset.values()(static_cast<Eigen::Index>(t), c);
      if (std::isnan(v)) continue;
      sums.back()(c) += v;
      counts.back()(c) += 1.0;
    }
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(months.size()), N);
  for (std::size_t m = 0; m < months.size(); ++m) {
    for (Eigen::Index c = 0; c < N; ++c) {
      values(static_cast<Eigen::Index>(m), c) = counts[m](c) > 0 ? sums[m](c) / counts[m](c) : kMissing;
    }
  }
  return {dataset.variable_names(), std::move(months), std::move(values), Frequency::Monthly,
          dataset.target_name()};
}

void SplitSpec::validate() const {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "validation_fraction must lie in (0, 1)");
  }
  if (!(train_end < test_begin)) {
    throw Error(ErrorCode::InvalidArgument, "train_end must precede the test range");
  }
  if (test_end < test_begin) throw Error(ErrorCode::InvalidArgument, "empty test range");
}

std::size_t NormalizationStats::index_of(std::string_view variable) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i] == variable) return i;
  }
  throw Error(ErrorCode::StatsMismatch, "no normalization stats for '" + std::string(variable) + "'");
}

NormalizationStats fit_normalization(const TimeSeriesDataset& dataset, const SplitSpec& split) {
  const auto train = dataset.truncate_after(split.train_end);
  if (train.rows() == 0) {
    throw Error(ErrorCode::EmptySplit, "no rows on or before " + split.train_end.iso());
  }
  NormalizationStats stats;
  stats.variables = dataset.variable_names();
  stats.fitted_from = train.timestamps().front();
  stats.fitted_to = train.timestamps().back();
  for (std::size_t c = 0; c < train.cols(); ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    const auto col = train.values().col(static_cast<Eigen::Index>(c));
    for (Eigen::Index t = 0; t < col.size(); ++t) {
      if (!std::isnan(col(t))) {
        sum += col(t);
        ++n;
      }
    }
    if (n == 0) throw Error(ErrorCode::AllMissingColumn, stats.variables[c] + " has no training values");
    const double mean = sum / double(n);
    double ss = 0.0;
    for (Eigen::Index t = 0; t < col.size(); ++t) {
      if (!std::isnan(col(t))) ss += (col(t) - mean) * (col(t) - mean);
    }
    stats.mean.push_back(mean);
    stats.std.push_back(std::sqrt(ss / double(n)));
  }
  return stats;
}

TimeSeriesDataset apply_normalization(const TimeSeriesDataset& dataset, const NormalizationStats& stats) {
  if (stats.mean.size() != stats.variables.size() || stats.std.size() != stats.variables.size()) {
    throw Error(ErrorCode::StatsMismatch, "normalization stats are malformed");
  }
  Eigen::MatrixXd out = dataset.values();
  for (std::size_t c = 0; c < dataset.cols(); ++c) {
    const std::size_t k = stats.index_of(dataset.variable_names()[c]);
    auto col = out.col(static_cast<Eigen::Index>(c));
    if (stats.std[k] == 0.0) {
      for (Eigen::Index t = 0; t < col.size(); ++t) {
        if (!std::isnan(col(t))) col(t) = 0.0;
      }
    } else {
      col = (col.array() - stats.mean[k]) / stats.std[k];
    }
  }
  return dataset.with_values(std::move(out));
}

std::vector<double> invert_normalization(std::span<const double> values, const NormalizationStats& stats,
                                         std::string_view variable) {
  const std::size_t k = stats.index_of(variable);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * stats.std[k] + stats.mean[k];
  return out;
}

nlohmann::json to_json(const NormalizationStats& stats) {
  return {{"variables", stats.variables},
          {"mean", stats.mean},
          {"std", stats.std},
          {"fitted_from", stats.fitted_from.iso()},
          {"fitted_to", stats.fitted_to.iso()}};
}

NormalizationStats normalization_from_json(const nlohmann::json& j) {
  NormalizationStats s;
  s.variables = j.at("variables").get<std::vector<std::string>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  s.fitted_from = Date::parse(j.at("fitted_from").get<std::string>());
  s.fitted_to = Date::parse(j.at("fitted_to").get<std::string>());
  if (s.mean.size() != s.variables.size() || s.std.size() != s.variables.size()) {
    throw Error(ErrorCode::StatsMismatch, "normalization stats are malformed");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Windows

std::span<const double> LagWindowSet::window(std::size_t s) const {
  const std::size_t stride = lookback * feature_count();
  return std::span<const double>(inputs).subspan(s * stride, stride);
}

LagWindowSet LagWindowSet::subset(std::span<const std::size_t> indices) const {
  LagWindowSet out;
  out.lookback = lookback;
  out.lead = lead;
  out.feature_names = feature_names;
  const std::size_t stride = lookback * feature_count();
  out.inputs.reserve(indices.size() * stride);
  for (const auto s : indices) {
    const auto w = window(s);
    out.inputs.insert(out.inputs.end(), w.begin(), w.end());
    out.targets.push_back(targets[s]);
    out.sample_dates.push_back(sample_dates[s]);
  }
  return out;
}

LagWindowSet build_lag_windows(const TimeSeriesDataset& dataset, std::span<const std::string> features,
                               std::size_t lookback, std::size_t lead) {
  if (lookback < 1 || lead < 1) throw Error(ErrorCode::InvalidArgument, "lookback and lead must be >= 1");
  if (features.empty()) throw Error(ErrorCode::InvalidArgument, "no features selected");
  std::vector<Eigen::Index> cols;
  for (const auto& f : features) cols.push_back(static_cast<Eigen::Index>(dataset.column_index(f)));
  if (dataset.missing_count() > 0) {
    throw Error(ErrorCode::InvalidArgument, "dataset has missing values; impute before windowing");
  }
  const std::size_t T = dataset.rows();
  if (T < lookback + lead) {
    throw Error(ErrorCode::InsufficientHistory, std::to_string(T) + " rows cannot hold a window of " +
                                                    std::to_string(lookback) + " plus lead " +
                                                    std::to_string(lead));
  }
  const std::size_t S = T - lookback - lead + 1;
  const auto target = static_cast<Eigen::Index>(dataset.target_index());
  const auto& X = dataset.values();

  LagWindowSet w;
  w.lookback = lookback;
  w.lead = lead;
  w.feature_names.assign(features.begin(), features.end());
  w.inputs.reserve(S * lookback * cols.size());
  w.targets.reserve(S);
  w.sample_dates.reserve(S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t k = 0; k < lookback; ++k) {
      for (const auto c : cols) w.inputs.push_back(X(static_cast<Eigen::Index>(s + k), c));
    }
    const std::size_t target_row = s + lookback + lead - 1;
    w.targets.push_back(X(static_cast<Eigen::Index>(target_row), target));
    w.sample_dates.push_back(dataset.timestamps()[target_row]);
  }
  return w;
}

WindowSplit split_windows(const LagWindowSet& windows, const SplitSpec& split) {
  split.validate();
  std::vector<std::size_t> fit, test;
  for (std::size_t s = 0; s < windows.size(); ++s) {
    const Date& d = windows.sample_dates[s];
    if (d <= split.train_end) {
      fit.push_back(s);
    } else if (split.test_begin <= d && d <= split.test_end) {
      test.push_back(s);
    }
  }
  if (test.empty()) throw Error(ErrorCode::EmptySplit, "no samples fall in the test range");
  const auto n_val = static_cast<std::size_t>(
      std::ceil(split.validation_fraction * double(fit.size()) - 1e-9));
  if (fit.size() < 2 || n_val == 0 || n_val >= fit.size()) {
    throw Error(ErrorCode::EmptySplit, std::to_string(fit.size()) +
                                           " training-range samples cannot be split into train and validation");
  }
  const std::span<const std::size_t> all(fit);
  return {windows.subset(all.first(fit.size() - n_val)), windows.subset(all.last(n_val)),
          windows.subset(test)};
}

}  // namespace causalcast
