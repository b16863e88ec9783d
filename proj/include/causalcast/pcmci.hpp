#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "causalcast/dataset.hpp"
#include "causalcast/features.hpp"
#include "causalcast/stats.hpp"

namespace causalcast {

/// X_{variable, t - lag}.
struct LaggedVariable {
  std::size_t variable = 0;
  std::size_t lag = 0;

  friend auto operator<=>(const LaggedVariable&, const LaggedVariable&) = default;
};

struct ParentCandidate {
  LaggedVariable node;
  double statistic = 0.0;
  double p_value = 1.0;
};

using ParentList = std::vector<ParentCandidate>;

struct CausalLink {
  std::string source;
  std::string target;
  std::size_t lag = 0;
  double statistic = 0.0;
  double p_value = 1.0;
  /// Always true for lag >= 1. An unoriented lag-0 link is stored once, with
  /// the lower-indexed variable as `source`.
  bool oriented = true;
};

struct CausalGraph {
  std::vector<std::string> variables;
  std::size_t max_lag = 0;
  double alpha = 0.05;
  bool fdr = false;
  std::vector<CausalLink> links;

  std::vector<CausalLink> links_into(std::string_view target) const;
};

enum class FdrMethod { None, BenjaminiHochberg };

struct PcmciOptions {
  std::size_t max_lag = 21;
  double pc_alpha = 0.05;
  /// Correction applied jointly to the final lagged and contemporaneous
  /// p-values before thresholding at pc_alpha.
  FdrMethod fdr = FdrMethod::BenjaminiHochberg;
  /// Use only the most recent rows (0 = all rows).
  std::size_t max_samples = 0;
  unsigned jobs = 1;
};

/// Survivor count after each PC1 iteration, for inspection in tests.
struct Pc1Trace {
  std::vector<std::size_t> survivors;
};

/// PC1 condition selection for one variable. All tests in a run share the
/// sample range t in [2*max_lag, T) so shifted MCI conditions stay in range.
ParentList pc1_condition_selection(const TimeSeriesDataset& dataset, std::string_view target_var,
                                   std::size_t max_lag, double pc_alpha, Pc1Trace* trace = nullptr);

/// MCI test of X_{source, t-lag} -> X_{target, t}, conditioned on the
/// target's parents (minus the tested node) and the source's parents shifted
/// back by `lag`.
stats::CITestResult mci_test(const TimeSeriesDataset& dataset, LaggedVariable source,
                             std::size_t target, const ParentList& parents_of_target,
                             const ParentList& parents_of_source, std::size_t max_lag);

/// PC-style lag-0 skeleton search. Each pair is always conditioned on both
/// endpoints' lagged parents, plus growing subsets of the remaining
/// contemporaneous neighbours. Survivors are oriented by the
/// unshielded-collider rule and Meek rule 1.
std::vector<CausalLink> contemporaneous_phase(const TimeSeriesDataset& dataset,
                                              const std::vector<ParentList>& lagged_parents,
                                              double pc_alpha, std::size_t max_lag);

CausalGraph run_pcmci_plus(const TimeSeriesDataset& dataset, const PcmciOptions& options = {});

FeatureSet select_features_pcmci(const CausalGraph& graph, std::string_view target);

nlohmann::json to_json(const CausalGraph& graph);
CausalGraph causal_graph_from_json(const nlohmann::json& j);
/// Double-quoted DOT identifier with embedded quotes and backslashes escaped.
std::string dot_quote(const std::string& s);
/// Graphviz digraph with lag-labelled edges; unoriented links use dir=none.
std::string to_dot(const CausalGraph& graph);

}  // namespace causalcast
