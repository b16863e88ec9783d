#include "causalcast/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "causalcast/error.hpp"

namespace causalcast::synthetic {

std::size_t PlantedGraph::max_lag() const {
  std::size_t m = 0;
  for (const auto& l : links) m = std::max(m, l.lag);
  return m;
}

double PlantedGraph::spectral_radius() const {
  const std::size_t N = variables.size(), p = max_lag();
  if (p == 0 || N == 0) return 0.0;
  const auto K = static_cast<Eigen::Index>(N * p);
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(K, K);
  for (const auto& l : links) {
    companion(static_cast<Eigen::Index>(l.target), static_cast<Eigen::Index>((l.lag - 1) * N + l.source)) +=
        l.coefficient;
  }
  for (Eigen::Index r = static_cast<Eigen::Index>(N); r < K; ++r) companion(r, r - static_cast<Eigen::Index>(N)) = 1.0;
  const Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

void PlantedGraph::validate() const {
  const std::size_t N = variables.size();
  if (N == 0) throw Error(ErrorCode::InvalidArgument, "planted graph has no variables");
  if (noise_std.size() != N) throw Error(ErrorCode::ShapeError, "need one noise_std per variable");
  for (const double s : noise_std) {
    if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_std must be positive");
  }
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  for (const auto& l : links) {
    if (l.source >= N || l.target >= N) throw Error(ErrorCode::InvalidArgument, "link endpoint out of range");
    if (l.lag < 1) throw Error(ErrorCode::InvalidArgument, "planted links need lag >= 1");
    if (!(std::abs(l.coefficient) <= 0.9)) throw Error(ErrorCode::InvalidArgument, "|coefficient| must be <= 0.9");
    if (!seen.insert({l.source, l.target, l.lag}).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate planted link");
    }
  }
  const double rho = spectral_radius();
  if (!(rho < 1.0)) {
    throw Error(ErrorCode::NonStationary, "companion spectral radius " + std::to_string(rho) + " >= 1");
  }
}

std::set<std::string> PlantedGraph::parents_of(const std::string& variable) const {
  std::set<std::string> out;
  for (const auto& l : links) {
    if (variables[l.target] == variable) out.insert(variables[l.source]);
  }
  return out;
}

TimeSeriesDataset generate_var(const PlantedGraph& graph, std::size_t T, std::uint64_t seed,
                               const GenerateOptions& options) {
  graph.validate();
  if (T < 100) throw Error(ErrorCode::InvalidArgument, "generate_var needs T >= 100");
  const std::size_t N = graph.variables.size();
  const std::size_t total = T + options.burn_in;
  const std::size_t p = graph.max_lag();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(N));
  for (std::size_t t = 0; t < total; ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    for (std::size_t v = 0; v < N; ++v) X(row, static_cast<Eigen::Index>(v)) = graph.noise_std[v] * gauss(rng);
    if (t < p) continue;
    for (const auto& l : graph.links) {
      X(row, static_cast<Eigen::Index>(l.target)) +=
          l.coefficient * X(row - static_cast<Eigen::Index>(l.lag), static_cast<Eigen::Index>(l.source));
    }
  }

  std::vector<Date> dates;
  dates.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    dates.push_back(options.frequency == Frequency::Daily ? options.start.plus_days(long(t))
                                                          : options.start.plus_months(int(t)));
  }
  const std::string target = options.target.empty() ? graph.variables.back() : options.target;
  return {graph.variables, std::move(dates),
          X.bottomRows(static_cast<Eigen::Index>(T)), options.frequency, target};
}

PlantedGraph random_planted_graph(std::size_t n_vars, std::size_t n_links, std::uint64_t seed,
                                  const RandomGraphOptions& options) {
  if (n_vars == 0) throw Error(ErrorCode::InvalidArgument, "n_vars must be >= 1");
  if (n_links > n_vars * (n_vars - 1)) {
    throw Error(ErrorCode::InvalidArgument, "n_links exceeds n_vars * (n_vars - 1)");
  }
  if (options.min_lag < 1 || options.max_lag < options.min_lag) {
    throw Error(ErrorCode::InvalidArgument, "bad lag range");
  }
  PlantedGraph g;
  for (std::size_t i = 0; i < n_vars; ++i) g.variables.push_back("X" + std::to_string(i));
  g.noise_std.assign(n_vars, options.noise_std);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t s = 0; s < n_vars; ++s) {
    for (std::size_t t = 0; t < n_vars; ++t) {
      if (s != t) pairs.emplace_back(s, t);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> lag(options.min_lag, options.max_lag);
  std::uniform_real_distribution<double> magnitude(options.min_abs_coefficient, options.max_abs_coefficient);
  std::bernoulli_distribution negative(0.5);
  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    g.links.clear();
    for (std::size_t k = 0; k < n_links; ++k) {
      const double c = magnitude(rng);
      g.links.push_back({pairs[k].first, pairs[k].second, lag(rng), negative(rng) ? -c : c});
    }
    std::sort(g.links.begin(), g.links.end(), [](const PlantedLink& a, const PlantedLink& b) {
      return std::tie(a.target, a.source, a.lag) < std::tie(b.target, b.source, b.lag);
    });
    if (g.spectral_radius() < 1.0) return g;
  }
  throw Error(ErrorCode::GenerationFailed, "no stationary graph after " + std::to_string(options.max_attempts) +
                                               " attempts");
}

double RecoveryScore::precision() const {
  return discovered == 0 ? 1.0 : double(true_positive) / double(discovered);
}

double RecoveryScore::recall() const { return planted == 0 ? 1.0 : double(true_positive) / double(planted); }

RecoveryScore score_links(const PlantedGraph& truth, const CausalGraph& discovered) {
  std::set<std::tuple<std::string, std::string, std::size_t>> planted;
  for (const auto& l : truth.links) {
    planted.insert({truth.variables[l.source], truth.variables[l.target], l.lag});
  }
  RecoveryScore s;
  s.planted = planted.size();
  s.discovered = discovered.links.size();
  for (const auto& l : discovered.links) {
    if (planted.count({l.source, l.target, l.lag}) > 0) ++s.true_positive;
  }
  return s;
}

nlohmann::json to_json(const PlantedGraph& graph) {
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : graph.links) {
    links.push_back({{"source", graph.variables[l.source]},
                     {"target", graph.variables[l.target]},
                     {"lag", l.lag},
                     {"coefficient", l.coefficient}});
  }
  return {{"method", "planted"},
          {"variables", graph.variables},
          {"max_lag", graph.max_lag()},
          {"noise_std", graph.noise_std},
          {"links", links}};
}

PlantedGraph planted_graph_from_json(const nlohmann::json& j) {
  PlantedGraph g;
  g.variables = j.at("variables").get<std::vector<std::string>>();
  if (j.contains("noise_std")) {
    const auto& ns = j.at("noise_std");
    g.noise_std = ns.is_array() ? ns.get<std::vector<double>>()
                                : std::vector<double>(g.variables.size(), ns.get<double>());
  } else {
    g.noise_std.assign(g.variables.size(), 1.0);
  }
  auto index = [&](const std::string& name) {
    const auto it = std::find(g.variables.begin(), g.variables.end(), name);
    if (it == g.variables.end()) throw Error(ErrorCode::UnknownVariable, "link references '" + name + "'");
    return static_cast<std::size_t>(it - g.variables.begin());
  };
  for (const auto& e : j.at("links")) {
    g.links.push_back({index(e.at("source").get<std::string>()), index(e.at("target").get<std::string>()),
                       e.at("lag").get<std::size_t>(), e.at("coefficient").get<double>()});
  }
  return g;
}

}  // namespace causalcast::synthetic
