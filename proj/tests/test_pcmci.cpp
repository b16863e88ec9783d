#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "causalcast/error.hpp"
#include "causalcast/pcmci.hpp"
#include "causalcast/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace causalcast;
using synthetic::PlantedGraph;

namespace {

PlantedGraph graph_of(std::size_t n, std::vector<synthetic::PlantedLink> links) {
  PlantedGraph g;
  g.variables = testing_support::names(n, "x");
  g.noise_std.assign(n, 1.0);
  g.links = std::move(links);
  return g;
}

bool has_node(const ParentList& p, std::size_t var, std::size_t lag) {
  return std::any_of(p.begin(), p.end(), [&](const ParentCandidate& c) {
    return c.node.variable == var && c.node.lag == lag;
  });
}

ParentList parents(std::initializer_list<std::pair<std::size_t, std::size_t>> nodes) {
  ParentList out;
  for (auto [v, l] : nodes) out.push_back({{v, l}, 0.0, 0.0});
  return out;
}

}  // namespace

TEST_SUITE("pcmci-plus") {

TEST_CASE("pc1 keeps only the autoregressive parent") {
  const auto g = graph_of(2, {{1, 1, 1, 0.8}});
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = pc1_condition_selection(generate_var(g, 3000, seed), "x1", 1, 0.05);
    if (p.size() == 1 && has_node(p, 1, 1)) ++exact;
  }
  CHECK(exact >= 19);
}

TEST_CASE("pc1 with more candidates: true parent always kept, nulls near alpha") {
  const auto g = graph_of(3, {{2, 2, 1, 0.8}});
  std::size_t null_survivors = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = pc1_condition_selection(generate_var(g, 3000, 500 + seed), "x2", 3, 0.05);
    CHECK(has_node(p, 2, 1));
    null_survivors += p.size() - 1;
  }
  CHECK(double(null_survivors) <= testing_support::binomial_upper(100 * 8, 0.05));
}

TEST_CASE("pc1 on white noise") {
  const auto g = graph_of(3, {});
  std::size_t survivors = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    survivors += pc1_condition_selection(generate_var(g, 1000, 900 + seed), "x0", 3, 0.05).size();
  }
  MESSAGE("null survivors: " << survivors << " of 900 candidates");
  CHECK(double(survivors) <= testing_support::binomial_upper(900, 0.05));
}

TEST_CASE("pc1 prunes deeper lags of an autocorrelated driver") {
  // x0 is AR(1) and drives x1 at lag 1, so x0 at lags 2 and 3 correlate with
  // x1 only through x0 at lag 1.
  const auto g = graph_of(2, {{0, 0, 1, 0.7}, {0, 1, 1, 0.5}});
  int kept = 0, spurious = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = generate_var(g, 2000, 40 + seed);
    const auto x0 = d.values().col(0), x1 = d.values().col(1);
    const Eigen::Index n = x0.size();
    std::vector<double> a(x0.data(), x0.data() + n - 2), b(x1.data() + 2, x1.data() + n);
    CHECK(oracles::pearson(a, b) > 0.15);
    const auto p = pc1_condition_selection(d, "x1", 3, 0.05);
    if (has_node(p, 0, 1)) ++kept;
    if (has_node(p, 0, 2) || has_node(p, 0, 3)) ++spurious;
  }
  CHECK(kept == 20);
  CHECK(spurious <= 3);
}

TEST_CASE("pc1 candidate sets never grow") {
  const auto g = synthetic::random_planted_graph(5, 6, 17);
  Pc1Trace trace;
  const auto p = pc1_condition_selection(generate_var(g, 1500, 3), g.variables[4], 4, 0.05, &trace);
  REQUIRE_FALSE(trace.survivors.empty());
  CHECK(trace.survivors.front() <= 5 * 4);
  for (std::size_t k = 1; k < trace.survivors.size(); ++k) CHECK(trace.survivors[k] <= trace.survivors[k - 1]);
  CHECK(trace.survivors.back() == p.size());
  for (std::size_t k = 1; k < p.size(); ++k) CHECK(std::abs(p[k].statistic) <= std::abs(p[k - 1].statistic));
}

TEST_CASE("pc1 needs enough samples") {
  // 40 usable rows against 50 candidates that nearly all survive.
  const auto d = testing_support::make_dataset(testing_support::gaussian(60, 5, 1), Frequency::Monthly, {2000, 1, 1},
                                               testing_support::names(5, "x"));
  CHECK_THROWS_WITH_AS(pc1_condition_selection(d, "x0", 10, 0.999), doctest::Contains("InsufficientHistory"), Error);
  CHECK_THROWS_WITH_AS(pc1_condition_selection(d.slice_rows(0, 20), "x0", 10, 0.05),
                       doctest::Contains("InsufficientHistory"), Error);
}

TEST_CASE("mci detects a true link") {
  const auto g = graph_of(2, {{0, 1, 2, 0.5}});
  int strong = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = generate_var(g, 3000, 70 + seed);
    if (mci_test(d, {0, 2}, 1, parents({{0, 2}}), {}, 3).p_value < 0.01) ++strong;
  }
  CHECK(strong >= 19);
}

TEST_CASE("mci removes a confounded association") {
  // z drives x at lag 1 and y at lag 2, so x(t-1) and y(t) share z(t-2).
  const auto g = graph_of(3, {{2, 0, 1, 0.8}, {2, 1, 2, 0.8}});
  int independent = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = generate_var(g, 3000, 300 + seed);
    const auto plain = mci_test(d, {0, 1}, 1, {}, {}, 3);
    CHECK(plain.p_value < 0.01);
    if (mci_test(d, {0, 1}, 1, parents({{2, 2}}), parents({{2, 1}}), 3).p_value > 0.05) ++independent;
  }
  CHECK(independent >= 18);
}

TEST_CASE("mci with empty parent sets is the lagged correlation") {
  const auto d = generate_var(graph_of(2, {{0, 1, 1, 0.4}}), 500, 2);
  const std::size_t L = 4, lag = 3;
  const auto r = mci_test(d, {0, lag}, 1, {}, {}, L);
  std::vector<double> a, b;
  for (std::size_t t = 2 * L; t < d.rows(); ++t) {
    a.push_back(d.values()(Eigen::Index(t - lag), 0));
    b.push_back(d.values()(Eigen::Index(t), 1));
  }
  CHECK(r.statistic == doctest::Approx(oracles::pearson(a, b)).epsilon(1e-12));
  CHECK(r.effective_dof == a.size() - 2);
}

TEST_CASE("contemporaneous phase") {
  SUBCASE("shared lagged parent leaves no lag-0 link") {
    const auto g = graph_of(3, {{0, 1, 1, 0.7}, {0, 2, 1, 0.7}});
    std::size_t spurious = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto d = generate_var(g, 2000, 800 + seed);
      const std::vector<ParentList> lagged{{}, parents({{0, 1}}), parents({{0, 1}})};
      spurious += contemporaneous_phase(d, lagged, 0.05, 2).size();
    }
    // Three pairs per seed, each a level-0.05 test.
    CHECK(double(spurious) <= testing_support::binomial_upper(60, 0.05));

    // Without the shared parent in the conditioning set the pair looks linked.
    const auto d = generate_var(g, 2000, 1);
    const auto naive = contemporaneous_phase(d, {{}, {}, {}}, 0.05, 2);
    CHECK(std::any_of(naive.begin(), naive.end(), [](const CausalLink& l) {
      return l.source == "x1" && l.target == "x2";
    }));
  }
  SUBCASE("directly coupled pair is linked") {
    Eigen::MatrixXd v = testing_support::gaussian(1000, 2, 4);
    v.col(1) = v.col(0) + 0.5 * v.col(1);
    const auto d = testing_support::make_dataset(v);
    const auto links = contemporaneous_phase(d, {{}, {}}, 0.05, 1);
    REQUIRE(links.size() == 1);
    CHECK(links[0].lag == 0);
    CHECK_FALSE(links[0].oriented);
    CHECK(links[0].source == "v0");
  }
  SUBCASE("collider is oriented") {
    Eigen::MatrixXd v = testing_support::gaussian(3000, 3, 6);
    v.col(2) = v.col(0) + v.col(1) + 0.5 * v.col(2);
    const auto d = testing_support::make_dataset(v);
    const auto links = contemporaneous_phase(d, {{}, {}, {}}, 0.05, 1);
    REQUIRE(links.size() == 2);
    for (const auto& l : links) {
      CHECK(l.oriented);
      CHECK(l.target == "v2");
    }
  }
  SUBCASE("single variable") {
    const auto d = testing_support::make_dataset(testing_support::gaussian(200, 1, 1));
    CHECK(contemporaneous_phase(d, {{}}, 0.05, 2).empty());
  }
}

TEST_CASE("planted graphs are recovered") {
  double precision = 0.0, recall = 0.0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto truth = synthetic::random_planted_graph(5, 6, 100 + seed);
    const auto d = generate_var(truth, 2000, 200 + seed);
    const auto graph = run_pcmci_plus(d, {.max_lag = 5});
    const auto score = synthetic::score_links(truth, graph);
    precision += score.precision();
    recall += score.recall();

    const auto target = d.target_name();
    const auto f = select_features_pcmci(graph, target);
    auto expect = truth.parents_of(target);
    expect.insert(target);
    CHECK(std::set<std::string>(f.features.begin(), f.features.end()) == expect);
  }
  CHECK(precision / seeds >= 0.9);
  CHECK(recall / seeds >= 0.9);
}

TEST_CASE("graph invariants") {
  const auto truth = synthetic::random_planted_graph(5, 7, 9);
  const auto d = generate_var(truth, 1200, 10);
  for (const auto fdr : {FdrMethod::BenjaminiHochberg, FdrMethod::None}) {
    const auto g = run_pcmci_plus(d, {.max_lag = 4, .fdr = fdr});
    std::set<std::tuple<std::string, std::string, std::size_t>> seen;
    for (const auto& l : g.links) {
      CHECK(l.p_value <= g.alpha);
      CHECK(l.lag <= g.max_lag);
      if (l.lag >= 1) CHECK(l.oriented);
      if (l.lag == 0) CHECK(l.source != l.target);
      CHECK(seen.insert({l.source, l.target, l.lag}).second);
    }
  }
}

TEST_CASE("deterministic across runs and thread counts") {
  const auto d = generate_var(synthetic::random_planted_graph(5, 6, 21), 1000, 22);
  const auto a = to_json(run_pcmci_plus(d, {.max_lag = 3, .jobs = 1})).dump();
  CHECK(a == to_json(run_pcmci_plus(d, {.max_lag = 3, .jobs = 1})).dump());
  CHECK(a == to_json(run_pcmci_plus(d, {.max_lag = 3, .jobs = 3})).dump());
}

TEST_CASE("null calibration without correction") {
  const auto g = graph_of(3, {});
  std::size_t links = 0;
  const std::size_t per_run = 3 * 3 * 2 + 3;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    links += run_pcmci_plus(generate_var(g, 500, 4000 + seed), {.max_lag = 2, .fdr = FdrMethod::None}).links.size();
  }
  MESSAGE("null links: " << links << " of " << 100 * per_run << " tests");
  CHECK(double(links) <= testing_support::binomial_upper(double(100 * per_run), 0.05));
}

TEST_CASE("max_samples uses the most recent rows") {
  const auto d = generate_var(synthetic::random_planted_graph(4, 4, 3), 1500, 4);
  const auto a = run_pcmci_plus(d, {.max_lag = 3, .max_samples = 600});
  const auto b = run_pcmci_plus(d.tail(600), {.max_lag = 3});
  CHECK(to_json(a).dump() == to_json(b).dump());
}

TEST_CASE("feature selection") {
  CausalGraph g;
  g.variables = {"a", "b", "y", "c"};
  CHECK(select_features_pcmci(g, "y").features == std::vector<std::string>{"y"});
  g.links = {{"c", "y", 2, 0.3, 0.001, true}, {"y", "a", 0, 0.2, 0.01, false}, {"b", "a", 1, 0.2, 0.01, true}};
  const auto f = select_features_pcmci(g, "y");
  CHECK(f.method == FeatureMethod::PCMCIplus);
  CHECK(f.features == std::vector<std::string>{"a", "y", "c"});
  CHECK_THROWS_AS(select_features_pcmci(g, "zz"), Error);
}

TEST_CASE("json and dot export") {
  CausalGraph g;
  g.variables = {"LW", "SIE", "odd \"name\""};
  g.max_lag = 3;
  g.links = {{"LW", "SIE", 1, 0.4, 0.001, true}, {"SIE", "odd \"name\"", 0, 0.2, 0.02, false}};
  const auto back = causal_graph_from_json(to_json(g));
  CHECK(to_json(back).dump() == to_json(g).dump());
  CHECK(to_json(g)["links"][0]["stat"] == 0.4);

  const auto dot = to_dot(g);
  CHECK(dot.rfind("digraph", 0) == 0);
  CHECK(dot.find("\"LW\" -> \"SIE\" [label=\"1\"];") != std::string::npos);
  CHECK(dot.find("dir=none") != std::string::npos);
  CHECK(dot.find("\"odd \\\"name\\\"\"") != std::string::npos);
  CHECK(std::count(dot.begin(), dot.end(), '{') == std::count(dot.begin(), dot.end(), '}'));
}

}  // TEST_SUITE
