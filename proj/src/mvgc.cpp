#include "causalcast/mvgc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "causalcast/error.hpp"
#include "causalcast/parallel.hpp"
#include "causalcast/stats.hpp"

namespace causalcast {

MvgcReport mvgc_test(const TimeSeriesDataset& dataset, std::string_view target,
                     const MvgcOptions& options) {
  const std::size_t T = dataset.rows(), N = dataset.cols(), L = options.max_lag;
  if (L < 1) throw Error(ErrorCode::InvalidArgument, "max_lag must be >= 1");
  if (dataset.missing_count() > 0) throw Error(ErrorCode::InvalidArgument, "MVGC needs a gap-free dataset");
  const std::size_t target_col = dataset.column_index(target);
  if (T <= N * L + L + 10) {
    throw Error(ErrorCode::InsufficientHistory, std::to_string(T) + " rows are too few for " +
                                                    std::to_string(N) + " variables at max_lag " +
                                                    std::to_string(L));
  }

  const std::size_t n = T - L;
  const auto& X = dataset.values();
  const auto rows = static_cast<Eigen::Index>(n);
  // Column 0 is the intercept; variable v at lag l sits at 1 + v*L + (l-1).
  Eigen::MatrixXd design(rows, static_cast<Eigen::Index>(1 + N * L));
  design.col(0).setOnes();
  for (std::size_t v = 0; v < N; ++v) {
    for (std::size_t l = 1; l <= L; ++l) {
      design.col(static_cast<Eigen::Index>(1 + v * L + (l - 1))) =
          X.col(static_cast<Eigen::Index>(v)).segment(static_cast<Eigen::Index>(L - l), rows);
    }
  }
  const Eigen::VectorXd y = X.col(static_cast<Eigen::Index>(target_col)).segment(static_cast<Eigen::Index>(L), rows);

  MvgcReport report;
  report.target = std::string(target);
  report.variables = dataset.variable_names();
  report.max_lag = L;
  report.alpha = options.alpha;
  report.n_obs = n;

  const std::size_t protect[] = {0};
  const auto kept = stats::independent_columns(design, protect);
  if (kept.size() < static_cast<std::size_t>(design.cols())) {
    std::set<std::size_t> kept_set(kept.begin(), kept.end());
    for (std::size_t c = 1; c < static_cast<std::size_t>(design.cols()); ++c) {
      if (kept_set.count(c) == 0) {
        const std::size_t v = (c - 1) / L, l = (c - 1) % L + 1;
        report.warnings.push_back("dropped collinear column " + dataset.variable_names()[v] + "(t-" +
                                  std::to_string(l) + ")");
      }
    }
  }
  if (n <= kept.size()) throw Error(ErrorCode::InsufficientHistory, "no residual degrees of freedom");
  const std::size_t d2 = n - kept.size();

  std::vector<std::size_t> tested;
  for (std::size_t v = 0; v < N; ++v) {
    if (v != target_col) tested.push_back(v);
  }
  report.results.resize(tested.size());

  parallel_for(tested.size(), options.jobs, [&](std::size_t i) {
    const std::size_t v = tested[i];
    std::vector<std::size_t> base_cols, extra_cols;
    for (const auto c : kept) {
      const bool own = c >= 1 && (c - 1) / L == v;
      (own ? extra_cols : base_cols).push_back(c);
    }
    GrangerResult r;
    r.variable = dataset.variable_names()[v];
    r.d1 = extra_cols.size();
    r.d2 = d2;
    if (r.d1 > 0) {
      Eigen::MatrixXd base(rows, static_cast<Eigen::Index>(base_cols.size()));
      Eigen::MatrixXd extra(rows, static_cast<Eigen::Index>(extra_cols.size()));
      for (std::size_t j = 0; j < base_cols.size(); ++j) base.col(static_cast<Eigen::Index>(j)) = design.col(static_cast<Eigen::Index>(base_cols[j]));
      for (std::size_t j = 0; j < extra_cols.size(); ++j) extra.col(static_cast<Eigen::Index>(j)) = design.col(static_cast<Eigen::Index>(extra_cols[j]));
      const auto rss = stats::nested_rss(base, extra, y);
      if (rss.full <= 0.0) {
        r.f_statistic = rss.restricted > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        r.p_value = rss.restricted > 0.0 ? 0.0 : 1.0;
      } else {
        r.f_statistic = ((rss.restricted - rss.full) / double(r.d1)) / (rss.full / double(d2));
        r.p_value = stats::f_sf(r.f_statistic, double(r.d1), double(d2));
      }
    }
    report.results[i] = std::move(r);
  });

  for (const auto& r : report.results) {
    if (r.d1 == 0) report.warnings.push_back("all lags of " + r.variable + " were collinear; not tested");
  }

  std::vector<double> p;
  for (const auto& r : report.results) p.push_back(r.p_value);
  if (options.fdr && !p.empty()) {
    const auto mask = stats::benjamini_hochberg(p, options.alpha);
    for (std::size_t i = 0; i < p.size(); ++i) report.results[i].selected = mask[i];
  } else {
    for (auto& r : report.results) r.selected = r.p_value <= options.alpha;
  }
  return report;
}

FeatureSet select_features_gc(const MvgcReport& report) {
  std::set<std::string> chosen;
  for (const auto& r : report.results) {
    if (r.selected) chosen.insert(r.variable);
  }
  return make_feature_set(FeatureMethod::GC, report.variables, report.target, chosen);
}

nlohmann::json to_json(const MvgcReport& report) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : report.results) {
    nlohmann::json F = std::isfinite(r.f_statistic) ? nlohmann::json(r.f_statistic) : nlohmann::json("inf");
    results.push_back({{"variable", r.variable},
                       {"F", F},
                       {"p", r.p_value},
                       {"dof", {r.d1, r.d2}},
                       {"selected", r.selected}});
  }
  return {{"method", "mvgc"},       {"target", report.target},   {"variables", report.variables},
          {"max_lag", report.max_lag}, {"alpha", report.alpha},  {"n_obs", report.n_obs},
          {"results", results},     {"warnings", report.warnings}};
}

MvgcReport mvgc_report_from_json(const nlohmann::json& j) {
  MvgcReport report;
  report.target = j.at("target").get<std::string>();
  report.variables = j.at("variables").get<std::vector<std::string>>();
  report.max_lag = j.at("max_lag").get<std::size_t>();
  report.alpha = j.at("alpha").get<double>();
  report.n_obs = j.value("n_obs", std::size_t{0});
  for (const auto& e : j.at("results")) {
    GrangerResult r;
    r.variable = e.at("variable").get<std::string>();
    r.f_statistic = e.at("F").is_string() ? std::numeric_limits<double>::infinity() : e.at("F").get<double>();
    r.p_value = e.at("p").get<double>();
    r.d1 = e.at("dof").at(0).get<std::size_t>();
    r.d2 = e.at("dof").at(1).get<std::size_t>();
    r.selected = e.at("selected").get<bool>();
    report.results.push_back(std::move(r));
  }
  if (j.contains("warnings")) report.warnings = j.at("warnings").get<std::vector<std::string>>();
  return report;
}

}  // namespace causalcast
