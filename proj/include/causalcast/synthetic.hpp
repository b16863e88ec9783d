#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "causalcast/dataset.hpp"
#include "causalcast/pcmci.hpp"

namespace causalcast::synthetic {

struct PlantedLink {
  std::size_t source = 0;
  std::size_t target = 0;
  std::size_t lag = 1;
  double coefficient = 0.0;
};

/// Ground-truth linear VAR structure with Gaussian innovations.
struct PlantedGraph {
  std::vector<std::string> variables;
  std::vector<PlantedLink> links;
  std::vector<double> noise_std;

  std::size_t max_lag() const;
  /// Spectral radius of the VAR companion matrix.
  double spectral_radius() const;
  /// Checks indices, |coefficient| <= 0.9, positive noise and stationarity.
  void validate() const;
  std::set<std::string> parents_of(const std::string& variable) const;
};

struct GenerateOptions {
  Frequency frequency = Frequency::Monthly;
  Date start{1979, 1, 1};
  /// Defaults to the last variable when empty.
  std::string target;
  std::size_t burn_in = 200;
};

/// Simulates T steps after discarding the burn-in; deterministic per seed.
TimeSeriesDataset generate_var(const PlantedGraph& graph, std::size_t T, std::uint64_t seed,
                               const GenerateOptions& options = {});

struct RandomGraphOptions {
  std::size_t min_lag = 1;
  std::size_t max_lag = 5;
  double min_abs_coefficient = 0.3;
  double max_abs_coefficient = 0.6;
  double noise_std = 1.0;
  std::size_t max_attempts = 1000;
};

/// Distinct ordered (source != target) pairs, each with a uniform lag and a
/// coefficient uniform in ±[min, max]. Rejection-resampled until stationary.
PlantedGraph random_planted_graph(std::size_t n_vars, std::size_t n_links, std::uint64_t seed,
                                  const RandomGraphOptions& options = {});

struct RecoveryScore {
  std::size_t planted = 0;
  std::size_t discovered = 0;
  std::size_t true_positive = 0;
  double precision() const;
  double recall() const;
};

/// Link-level comparison on (source, target, lag) triples. Discovered lag-0
/// links count as false positives.
RecoveryScore score_links(const PlantedGraph& truth, const CausalGraph& discovered);

nlohmann::json to_json(const PlantedGraph& graph);
PlantedGraph planted_graph_from_json(const nlohmann::json& j);

}  // namespace causalcast::synthetic
