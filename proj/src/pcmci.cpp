#include "causalcast/pcmci.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "causalcast/error.hpp"
#include "causalcast/parallel.hpp"

namespace causalcast {

namespace {

/// Aligned lagged samples over t in [2*max_lag, T).
class LaggedSampler {
 public:
  LaggedSampler(const TimeSeriesDataset& dataset, std::size_t max_lag)
      : X_(dataset.values()), horizon_(2 * max_lag) {
    if (max_lag < 1) throw Error(ErrorCode::InvalidArgument, "max_lag must be >= 1");
    if (dataset.missing_count() > 0) {
      throw Error(ErrorCode::InvalidArgument, "causal discovery needs a gap-free dataset");
    }
    if (dataset.rows() <= horizon_ + 4) {
      throw Error(ErrorCode::InsufficientHistory, std::to_string(dataset.rows()) +
                                                      " rows are too few for max_lag " +
                                                      std::to_string(max_lag));
    }
    n_ = dataset.rows() - horizon_;
  }

  Eigen::VectorXd series(LaggedVariable v) const {
    return X_.col(static_cast<Eigen::Index>(v.variable))
        .segment(static_cast<Eigen::Index>(horizon_ - v.lag), static_cast<Eigen::Index>(n_));
  }

  stats::CITestResult test(LaggedVariable x, LaggedVariable y, std::span<const LaggedVariable> z) const {
    Eigen::MatrixXd cond(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(z.size()));
    for (std::size_t k = 0; k < z.size(); ++k) cond.col(static_cast<Eigen::Index>(k)) = series(z[k]);
    return stats::partial_correlation(series(x), series(y), cond);
  }

  std::size_t horizon() const { return horizon_; }

 private:
  const Eigen::MatrixXd& X_;
  std::size_t horizon_;
  std::size_t n_ = 0;
};

bool stronger(const ParentCandidate& a, const ParentCandidate& b) {
  const double sa = std::abs(a.statistic), sb = std::abs(b.statistic);
  if (sa != sb) return sa > sb;
  return a.node < b.node;
}

ParentList pc1_impl(const LaggedSampler& sampler, std::size_t n_vars, std::size_t target,
                    std::size_t max_lag, double pc_alpha, Pc1Trace* trace) {
  ParentList alive;
  for (std::size_t i = 0; i < n_vars; ++i) {
    for (std::size_t l = 1; l <= max_lag; ++l) alive.push_back({{i, l}, 0.0, 1.0});
  }
  const LaggedVariable y{target, 0};
  std::vector<LaggedVariable> conds;
  for (std::size_t q = 0; !alive.empty() && q < alive.size(); ++q) {
    // Conditions come from the ordering fixed at the end of the previous pass.
    ParentList next = alive;
    for (std::size_t k = 0; k < alive.size(); ++k) {
      conds.clear();
      for (std::size_t m = 0; m < alive.size() && conds.size() < q; ++m) {
        if (m != k) conds.push_back(alive[m].node);
      }
      const auto res = sampler.test(alive[k].node, y, conds);
      next[k].statistic = res.statistic;
      next[k].p_value = res.p_value;
    }
    std::erase_if(next, [&](const ParentCandidate& c) { return c.p_value > pc_alpha; });
    std::sort(next.begin(), next.end(), stronger);
    alive = std::move(next);
    if (trace) trace->survivors.push_back(alive.size());
  }
  return alive;
}

std::vector<LaggedVariable> mci_conditions(LaggedVariable source, const ParentList& parents_of_target,
                                           const ParentList& parents_of_source, std::size_t horizon) {
  std::set<LaggedVariable> z;
  for (const auto& p : parents_of_target) {
    if (p.node != source) z.insert(p.node);
  }
  for (const auto& p : parents_of_source) {
    const LaggedVariable shifted{p.node.variable, p.node.lag + source.lag};
    if (shifted.lag <= horizon && shifted != source) z.insert(shifted);
  }
  return {z.begin(), z.end()};
}

struct PairState {
  std::size_t i = 0, j = 0;
  bool adjacent = true;
  double statistic = 0.0;
  double p_value = -1.0;  // largest p seen so far (the decisive test)
  std::vector<LaggedVariable> decisive;
};

void for_each_subset(const std::vector<std::size_t>& pool, std::size_t size,
                     const std::function<void(const std::vector<std::size_t>&)>& fn) {
  if (size > pool.size()) return;
  std::vector<std::size_t> idx(size);
  for (std::size_t k = 0; k < size; ++k) idx[k] = k;
  std::vector<std::size_t> subset(size);
  for (;;) {
    for (std::size_t k = 0; k < size; ++k) subset[k] = pool[idx[k]];
    fn(subset);
    std::size_t k = size;
    while (k > 0 && idx[k - 1] == pool.size() - size + k - 1) --k;
    if (k == 0) return;
    ++idx[k - 1];
    for (std::size_t m = k; m < size; ++m) idx[m] = idx[m - 1] + 1;
  }
}

std::vector<PairState> contemporaneous_skeleton(const LaggedSampler& sampler, std::size_t n_vars,
                                                const std::vector<ParentList>& lagged_parents,
                                                double pc_alpha) {
  std::vector<PairState> pairs;
  std::vector<std::set<std::size_t>> adj(n_vars);
  for (std::size_t i = 0; i < n_vars; ++i) {
    for (std::size_t j = i + 1; j < n_vars; ++j) {
      PairState st;
      st.i = i;
      st.j = j;
      pairs.push_back(std::move(st));
      adj[i].insert(j);
      adj[j].insert(i);
    }
  }
  auto base_conditions = [&](std::size_t i, std::size_t j) {
    std::set<LaggedVariable> b;
    for (const auto& p : lagged_parents[i]) b.insert(p.node);
    for (const auto& p : lagged_parents[j]) b.insert(p.node);
    return b;
  };

  for (std::size_t level = 0;; ++level) {
    const auto snapshot = adj;
    bool any_tested = false;
    std::vector<std::size_t> removed;
    for (std::size_t e = 0; e < pairs.size(); ++e) {
      auto& pair = pairs[e];
      if (!pair.adjacent) continue;
      std::set<std::vector<std::size_t>> subsets;
      for (const auto side : {pair.i, pair.j}) {
        std::vector<std::size_t> pool;
        for (const auto k : snapshot[side]) {
          if (k != pair.i && k != pair.j) pool.push_back(k);
        }
        for_each_subset(pool, level, [&](const std::vector<std::size_t>& s) { subsets.insert(s); });
      }
      const auto base = base_conditions(pair.i, pair.j);
      for (const auto& s : subsets) {
        std::set<LaggedVariable> z = base;
        for (const auto k : s) z.insert({k, 0});
        const std::vector<LaggedVariable> zv(z.begin(), z.end());
        const auto res = sampler.test({pair.i, 0}, {pair.j, 0}, zv);
        any_tested = true;
        if (res.p_value > pair.p_value) {
          pair.p_value = res.p_value;
          pair.statistic = res.statistic;
          pair.decisive = zv;
        }
        if (res.p_value > pc_alpha) {
          removed.push_back(e);
          break;
        }
      }
    }
    for (const auto e : removed) {
      pairs[e].adjacent = false;
      adj[pairs[e].i].erase(pairs[e].j);
      adj[pairs[e].j].erase(pairs[e].i);
    }
    if (!any_tested) break;
  }
  return pairs;
}

/// Orients the lag-0 skeleton: unshielded colliders first (conflicting
/// proposals leave the edge unoriented), then Meek rule 1 to a fixed point.
std::vector<CausalLink> orient(const std::vector<PairState>& pairs, const std::vector<bool>& keep,
                               const std::vector<double>& reported_p,
                               const std::vector<std::string>& names) {
  const std::size_t N = names.size();
  std::vector<std::vector<bool>> adj(N, std::vector<bool>(N, false));
  std::map<std::pair<std::size_t, std::size_t>, const std::vector<LaggedVariable>*> sepset;
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto& p = pairs[e];
    if (keep[e]) {
      adj[p.i][p.j] = adj[p.j][p.i] = true;
    } else {
      sepset[{p.i, p.j}] = &p.decisive;
    }
  }
  std::vector<std::vector<int>> proposals(N, std::vector<int>(N, 0));
  for (std::size_t k = 0; k < N; ++k) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = i + 1; j < N; ++j) {
        if (i == k || j == k || !adj[i][k] || !adj[j][k] || adj[i][j]) continue;
        const auto* s = sepset.at({i, j});
        if (std::find(s->begin(), s->end(), LaggedVariable{k, 0}) == s->end()) {
          proposals[i][k] = 1;
          proposals[j][k] = 1;
        }
      }
    }
  }
  std::vector<std::vector<bool>> arrow(N, std::vector<bool>(N, false));
  std::vector<std::vector<bool>> conflict(N, std::vector<bool>(N, false));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      if (!adj[i][j]) continue;
      if (proposals[i][j] && proposals[j][i]) {
        conflict[i][j] = true;
      } else if (proposals[i][j]) {
        arrow[i][j] = true;
      }
    }
  }
  auto undirected = [&](std::size_t a, std::size_t b) {
    return adj[a][b] && !arrow[a][b] && !arrow[b][a] && !conflict[a][b] && !conflict[b][a];
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t b = 0; b < N; ++b) {
      for (std::size_t c = 0; c < N; ++c) {
        if (b == c || !undirected(b, c)) continue;
        for (std::size_t a = 0; a < N; ++a) {
          if (a != c && arrow[a][b] && !adj[a][c]) {
            arrow[b][c] = true;
            changed = true;
            break;
          }
        }
      }
    }
  }

  std::vector<CausalLink> links;
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    if (!keep[e]) continue;
    const auto& p = pairs[e];
    CausalLink link{names[p.i], names[p.j], 0, p.statistic, reported_p[e], true};
    if (arrow[p.j][p.i]) {
      std::swap(link.source, link.target);
    } else if (!arrow[p.i][p.j]) {
      link.oriented = false;
    }
    links.push_back(std::move(link));
  }
  return links;
}

std::vector<ParentList> all_pc1(const LaggedSampler& sampler, std::size_t n_vars, std::size_t max_lag,
                                double pc_alpha, unsigned jobs) {
  std::vector<ParentList> parents(n_vars);
  parallel_for(n_vars, jobs, [&](std::size_t j) {
    parents[j] = pc1_impl(sampler, n_vars, j, max_lag, pc_alpha, nullptr);
  });
  return parents;
}

void check_alpha(double a) {
  if (!(a > 0.0 && a < 1.0)) throw Error(ErrorCode::InvalidArgument, "pc_alpha must lie in (0, 1)");
}

}  // namespace

std::vector<CausalLink> CausalGraph::links_into(std::string_view target) const {
  std::vector<CausalLink> out;
  for (const auto& l : links) {
    if (l.target == target) out.push_back(l);
  }
  return out;
}

ParentList pc1_condition_selection(const TimeSeriesDataset& dataset, std::string_view target_var,
                                   std::size_t max_lag, double pc_alpha, Pc1Trace* trace) {
  check_alpha(pc_alpha);
  const LaggedSampler sampler(dataset, max_lag);
  return pc1_impl(sampler, dataset.cols(), dataset.column_index(target_var), max_lag, pc_alpha, trace);
}

stats::CITestResult mci_test(const TimeSeriesDataset& dataset, LaggedVariable source, std::size_t target,
                             const ParentList& parents_of_target, const ParentList& parents_of_source,
                             std::size_t max_lag) {
  if (source.lag < 1 || source.lag > max_lag) {
    throw Error(ErrorCode::InvalidArgument, "MCI link lag must lie in [1, max_lag]");
  }
  const LaggedSampler sampler(dataset, max_lag);
  const auto z = mci_conditions(source, parents_of_target, parents_of_source, sampler.horizon());
  return sampler.test(source, {target, 0}, z);
}

std::vector<CausalLink> contemporaneous_phase(const TimeSeriesDataset& dataset,
                                              const std::vector<ParentList>& lagged_parents,
                                              double pc_alpha, std::size_t max_lag) {
  check_alpha(pc_alpha);
  if (lagged_parents.size() != dataset.cols()) {
    throw Error(ErrorCode::ShapeError, "need one lagged parent list per variable");
  }
  const LaggedSampler sampler(dataset, max_lag);
  const auto pairs = contemporaneous_skeleton(sampler, dataset.cols(), lagged_parents, pc_alpha);
  std::vector<bool> keep;
  std::vector<double> p;
  for (const auto& pair : pairs) {
    keep.push_back(pair.adjacent);
    p.push_back(pair.p_value);
  }
  return orient(pairs, keep, p, dataset.variable_names());
}

CausalGraph run_pcmci_plus(const TimeSeriesDataset& full, const PcmciOptions& options) {
  check_alpha(options.pc_alpha);
  const TimeSeriesDataset dataset = options.max_samples > 0 ? full.tail(options.max_samples) : full;
  const std::size_t N = dataset.cols(), L = options.max_lag;
  const LaggedSampler sampler(dataset, L);

  const auto parents = all_pc1(sampler, N, L, options.pc_alpha, options.jobs);

  // MCI over every lagged (source, lag, target) triple.
  std::vector<stats::CITestResult> mci(N * N * L);
  auto slot = [&](std::size_t j, std::size_t i, std::size_t l) { return (j * N + i) * L + (l - 1); };
  parallel_for(N, options.jobs, [&](std::size_t j) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t l = 1; l <= L; ++l) {
        const LaggedVariable src{i, l};
        const auto z = mci_conditions(src, parents[j], parents[i], sampler.horizon());
        mci[slot(j, i, l)] = sampler.test(src, {j, 0}, z);
      }
    }
  });

  const auto pairs = contemporaneous_skeleton(sampler, N, parents, options.pc_alpha);

  std::vector<double> family;
  family.reserve(mci.size() + pairs.size());
  for (const auto& r : mci) family.push_back(r.p_value);
  for (const auto& p : pairs) family.push_back(std::clamp(p.p_value, 0.0, 1.0));
  const std::vector<double> reported =
      options.fdr == FdrMethod::BenjaminiHochberg ? stats::bh_adjust(family) : family;

  CausalGraph graph;
  graph.variables = dataset.variable_names();
  graph.max_lag = L;
  graph.alpha = options.pc_alpha;
  graph.fdr = options.fdr == FdrMethod::BenjaminiHochberg;
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t l = 1; l <= L; ++l) {
        const std::size_t s = slot(j, i, l);
        if (reported[s] <= options.pc_alpha) {
          graph.links.push_back({graph.variables[i], graph.variables[j], l, mci[s].statistic, reported[s], true});
        }
      }
    }
  }
  std::vector<bool> keep;
  std::vector<double> pair_p;
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const double q = reported[mci.size() + e];
    keep.push_back(pairs[e].adjacent && q <= options.pc_alpha);
    pair_p.push_back(q);
  }
  for (auto& link : orient(pairs, keep, pair_p, graph.variables)) graph.links.push_back(std::move(link));

  auto index = [&](const std::string& name) { return dataset.column_index(name); };
  std::sort(graph.links.begin(), graph.links.end(), [&](const CausalLink& a, const CausalLink& b) {
    return std::tuple(index(a.target), index(a.source), a.lag) < std::tuple(index(b.target), index(b.source), b.lag);
  });
  return graph;
}

FeatureSet select_features_pcmci(const CausalGraph& graph, std::string_view target) {
  std::set<std::string> chosen;
  for (const auto& l : graph.links) {
    if (l.target == target) chosen.insert(l.source);
    if (l.lag == 0 && !l.oriented && l.source == target) chosen.insert(l.target);
  }
  const std::string t(target);
  if (std::find(graph.variables.begin(), graph.variables.end(), t) == graph.variables.end()) {
    throw Error(ErrorCode::UnknownTarget, "target '" + t + "' not in graph");
  }
  return make_feature_set(FeatureMethod::PCMCIplus, graph.variables, t, chosen);
}

nlohmann::json to_json(const CausalGraph& graph) {
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : graph.links) {
    links.push_back({{"source", l.source},
                     {"target", l.target},
                     {"lag", l.lag},
                     {"stat", l.statistic},
                     {"p", l.p_value},
                     {"oriented", l.oriented}});
  }
  return {{"method", "pcmci+"},
          {"variables", graph.variables},
          {"max_lag", graph.max_lag},
          {"alpha", graph.alpha},
          {"fdr", graph.fdr ? "bh" : "none"},
          {"links", links}};
}

CausalGraph causal_graph_from_json(const nlohmann::json& j) {
  CausalGraph g;
  g.variables = j.at("variables").get<std::vector<std::string>>();
  g.max_lag = j.at("max_lag").get<std::size_t>();
  g.alpha = j.value("alpha", 0.05);
  g.fdr = j.value("fdr", std::string("none")) == "bh";
  for (const auto& e : j.at("links")) {
    CausalLink l;
    l.source = e.at("source").get<std::string>();
    l.target = e.at("target").get<std::string>();
    l.lag = e.at("lag").get<std::size_t>();
    l.statistic = e.value("stat", 0.0);
    l.p_value = e.value("p", 0.0);
    l.oriented = e.value("oriented", true);
    g.links.push_back(std::move(l));
  }
  return g;
}

std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string to_dot(const CausalGraph& graph) {
  std::ostringstream os;
  os << "digraph causal_graph {\n  rankdir=LR;\n";
  for (const auto& v : graph.variables) os << "  " << dot_quote(v) << ";\n";
  for (const auto& l : graph.links) {
    os << "  " << dot_quote(l.source) << " -> " << dot_quote(l.target) << " [label=\"" << l.lag << "\"";
    if (!l.oriented) os << ", dir=none";
    os << "];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace causalcast
