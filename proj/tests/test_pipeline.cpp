#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalcast/checkpoint.hpp"
#include "causalcast/error.hpp"
#include "causalcast/metrics.hpp"
#include "causalcast/nn.hpp"
#include "causalcast/pcmci.hpp"
#include "causalcast/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace causalcast;
using nlohmann::json;
using testing_support::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no causalcast::Error thrown");
  return ErrorCode::IoError;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error_of(const json& j) {
  try {
    parse_experiment_config(j);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  FAIL("config accepted");
  return {};
}

/// Three monthly variables, X0 -> X2 at lag 1 and X1 -> X2 at lag 2, 1979-01
/// to 1998-12 with a tiny network so a run takes a second or two.
json toy_config(const std::filesystem::path& out, std::vector<std::string> variants = {"vanilla"}) {
  const json graph = {{"variables", {"X0", "X1", "X2"}},
                      {"noise_std", {1.0, 1.0, 0.5}},
                      {"links",
                       {{{"source", "X0"}, {"target", "X2"}, {"lag", 1}, {"coefficient", 0.6}},
                        {{"source", "X1"}, {"target", "X2"}, {"lag", 2}, {"coefficient", -0.5}},
                        {{"source", "X2"}, {"target", "X2"}, {"lag", 1}, {"coefficient", 0.3}}}}};
  return {{"seed", 7},
          {"target", "X2"},
          {"lookback", 4},
          {"leads", {1, 2, 3, 4, 5, 6}},
          {"monthly",
           {{"synthetic", {{"graph", graph}, {"length", 240}, {"seed", 3}, {"offsets", {{"X2", 10.0}}}}},
            {"variants", variants}}},
          {"split", {{"train_end", "1995-12-01"}, {"test_begin", "1996-01-01"}, {"test_end", "1998-12-01"}}},
          {"discovery", {{"max_lag", 3}}},
          {"training", {{"batch_size", 32}, {"max_epochs", 4}, {"patience", 2}, {"learning_rate", 0.005}}},
          {"model", {{"gru_hidden", 6}, {"lstm_hidden", 6}, {"dense", 4}, {"dropout", 0.1}}},
          {"output_dir", out.string()}};
}

}  // namespace

TEST_SUITE("forecast-pipeline") {

TEST_CASE("metrics on the worked example") {
  const std::vector<double> pred{1, 2, 3}, obs{2, 2, 5};
  CHECK(rmse(pred, obs) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  CHECK(mae(pred, obs) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r2(pred, obs) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("perfect and mean predictors are exact") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(3.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> obs(5 + trial);
    for (auto& v : obs) v = n(rng);
    CHECK(rmse(obs, obs) == 0.0);
    CHECK(mae(obs, obs) == 0.0);
    CHECK(r2(obs, obs) == 1.0);
    const double mean = std::accumulate(obs.begin(), obs.end(), 0.0) / double(obs.size());
    const std::vector<double> flat(obs.size(), mean);
    CHECK(r2(flat, obs) == 0.0);
  }
}

TEST_CASE("metrics match brute force on random pairs") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> len(2, 400);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pred(std::size_t(len(rng))), obs(pred.size());
    const double scale = std::exp(3.0 * n(rng));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      obs[i] = scale * n(rng);
      pred[i] = obs[i] + 0.5 * scale * n(rng);
    }
    const auto rel = [](double a, long double b) { return double(std::abs((a - b) / b)); };
    worst = std::max({worst, rel(rmse(pred, obs), oracles::rmse(obs, pred)), rel(mae(pred, obs), oracles::mae(obs, pred)),
                      rel(r2(pred, obs), oracles::r2(obs, pred))});
    CHECK(r2(pred, obs) <= 1.0);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("r2 never exceeds one and can be negative") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pred(20), obs(20);
    for (std::size_t i = 0; i < 20; ++i) {
      obs[i] = n(rng);
      pred[i] = 3.0 * n(rng);
    }
    CHECK(r2(pred, obs) <= 1.0);
  }
  CHECK(r2(std::vector<double>{5, 5, 5}, std::vector<double>{1, 2, 3}) < 0.0);
}

TEST_CASE("metric errors") {
  const std::vector<double> a{1, 2, 3}, b{1, 2}, flat{4, 4, 4}, none;
  CHECK(code_of([&] { rmse(a, b); }) == ErrorCode::ShapeError);
  CHECK(code_of([&] { mae(none, none); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { r2(a, flat); }) == ErrorCode::DegenerateR2);
  CHECK(code_of([&] { percentage_metrics(1.0, 1.0, std::vector<double>{-1, 1}); }) == ErrorCode::DegeneratePercentage);
}

TEST_CASE("percentage metrics") {
  const std::vector<double> obs{8, 10, 12};
  const auto p = percentage_metrics(1.0, 0.5, obs);
  CHECK(p.rmse_pct == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(p.mae_pct == doctest::Approx(5.0).epsilon(1e-15));
  const auto zero = percentage_metrics(rmse(obs, obs), mae(obs, obs), obs);
  CHECK(zero.rmse_pct == 0.0);
  CHECK(zero.mae_pct == 0.0);
  // Relative to a negative mean the percentage changes sign.
  CHECK(percentage_metrics(1.0, 1.0, std::vector<double>{-10}).rmse_pct == doctest::Approx(-10.0));
}

TEST_CASE("config parses and round trips") {
  TempDir dir("cfg");
  const auto c = parse_experiment_config(toy_config(dir.path(), {"vanilla", "GC", "PCMCIplus"}));
  CHECK(c.seed == 7);
  CHECK(c.target == "X2");
  CHECK(c.lookback == 4);
  CHECK(c.leads.size() == 6);
  REQUIRE(c.monthly);
  CHECK(c.monthly->variants.size() == 3);
  CHECK(c.monthly->lead_step == 1);
  CHECK_FALSE(c.daily);
  CHECK(c.discovery.max_lag == 3);
  CHECK(c.discovery.fdr);
  CHECK(c.training.max_epochs == 4);
  CHECK(c.model.gru_hidden == 6);
  const auto again = parse_experiment_config(to_json(c));
  CHECK(to_json(again) == to_json(c));
}

TEST_CASE("config errors name the key path") {
  TempDir dir("cfgerr");
  const json base = toy_config(dir.path());

  json j = base;
  j.erase("seed");
  CHECK(config_error_of(j).find("'seed'") != std::string::npos);

  j = base;
  j["split"].erase("test_end");
  CHECK(config_error_of(j).find("'split.test_end'") != std::string::npos);

  j = base;
  j["monthly"]["synthetic"].erase("length");
  CHECK(config_error_of(j).find("'monthly.synthetic.length'") != std::string::npos);

  j = base;
  j["training"]["learning_rate"] = "fast";
  CHECK(config_error_of(j).find("'training.learning_rate'") != std::string::npos);

  j = base;
  j["monthly"]["variants"] = {"vanilla", "bogus"};
  CHECK(config_error_of(j).find("'monthly.variants[1]'") != std::string::npos);

  j = base;
  j["discovery"]["maxlag"] = 3;
  CHECK(config_error_of(j).find("discovery.maxlag") != std::string::npos);

  j = base;
  j["leads"] = json::array();
  CHECK(config_error_of(j).find("'leads'") != std::string::npos);

  j = base;
  j["discovery"]["fdr"] = "holm";
  CHECK(config_error_of(j).find("'discovery.fdr'") != std::string::npos);

  j = base;
  j["daily"] = j["monthly"];
  j["daily"]["variants"] = {"DPCMCIplus"};
  CHECK(config_error_of(j).find("'daily.variants'") != std::string::npos);

  j = base;
  j["monthly"]["variants"] = {"DPCMCIplus"};
  CHECK(config_error_of(j).find("'daily'") != std::string::npos);

  j = base;
  j["split"]["test_begin"] = "1990-01-01";
  CHECK(config_error_of(j).find("'split'") != std::string::npos);
}

TEST_CASE("config file paths resolve against the config directory") {
  TempDir dir("cfgpath");
  json j = toy_config(dir.path());
  j["monthly"].erase("synthetic");
  j["monthly"]["path"] = "data/monthly.csv";
  {
    std::ofstream(dir / "config.json") << j.dump();
  }
  const auto c = load_experiment_config(dir / "config.json");
  REQUIRE(c.monthly);
  REQUIRE(c.monthly->path);
  CHECK(*c.monthly->path == dir.path() / "data/monthly.csv");
  CHECK(code_of([&] { load_experiment_config(dir / "missing.json"); }) == ErrorCode::IoError);
}

TEST_CASE("vanilla toy run has six finite lead rows") {
  TempDir dir("toy");
  const auto c = parse_experiment_config(toy_config(dir.path()));
  const auto result = run_experiment(c);
  CHECK(result.report.failures.empty());
  REQUIRE(result.report.records.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& r = result.report.records[i];
    CHECK(r.lead == i + 1);
    CHECK(r.variant == "vanilla");
    CHECK(r.frequency == "monthly");
    CHECK(std::isfinite(r.rmse));
    CHECK(std::isfinite(r.mae));
    CHECK(std::isfinite(r.rmse_pct));
    CHECK(std::isfinite(r.mae_pct));
    CHECK(std::isfinite(r.r2));
    CHECK(r.rmse >= 0.0);
    CHECK(r.mae >= 0.0);
    CHECK(r.r2 <= 1.0);
    CHECK(r.n_test == 36);
  }
  for (const auto* name : {"report.csv", "report.json", "table_monthly.csv", "r2_monthly.csv", "monthly_mvgc.json",
                           "monthly_pcmci.json", "monthly_pcmci.dot"}) {
    CHECK(std::filesystem::exists(dir / name));
  }
  CHECK(slurp(dir / "report.csv") == report_csv(result.report));
}

TEST_CASE("report cardinality, layout and feature discipline") {
  TempDir dir("roster");
  const auto c = parse_experiment_config(toy_config(dir.path(), {"vanilla", "GC", "PCMCIplus"}));
  const auto result = run_experiment(c);
  CHECK(result.report.failures.empty());
  CHECK(result.report.records.size() == 3 * 6);

  const auto csv = report_csv(result.report);
  CHECK(csv.substr(0, csv.find('\n')) == "frequency,variant,lead,rmse,mae,rmse_pct,mae_pct,r2,n_test");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 19);

  const auto table = metrics_table_csv(result.report, "monthly");
  std::istringstream lines(table);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "lead_time,metric,vanilla,GC,PCMCIplus");
  int rows = 0;
  while (std::getline(lines, line)) {
    CHECK(line.find(rows % 2 == 0 ? ",RMSE (%)," : ",MAE (%),") != std::string::npos);
    CHECK(line.substr(0, line.find(',')) == std::to_string(rows / 2 + 1));
    ++rows;
  }
  CHECK(rows == 12);
  const auto r2s = r2_series_csv(result.report, "monthly");
  CHECK(r2s.substr(0, r2s.find('\n')) == "lead,vanilla,GC,PCMCIplus");
  CHECK(std::count(r2s.begin(), r2s.end(), '\n') == 7);

  // Each checkpoint reads exactly its variant's columns.
  const auto graph = causal_graph_from_json(json::parse(slurp(dir / "monthly_pcmci.json")));
  const auto pc_features = select_features_pcmci(graph, "X2").features;
  const auto gc_report = json::parse(slurp(dir / "monthly_mvgc.json"));
  std::set<std::string> gc_selected{"X2"};
  for (const auto& r : gc_report.at("results")) {
    if (r.at("selected").get<bool>()) gc_selected.insert(r.at("variable").get<std::string>());
  }
  for (std::size_t lead = 1; lead <= 6; ++lead) {
    const auto suffix = "_lead" + std::to_string(lead) + ".ckpt";
    const auto vanilla = load_checkpoint(dir / ("checkpoints/monthly_vanilla" + suffix));
    CHECK(vanilla.features == std::vector<std::string>{"X0", "X1", "X2"});
    const auto pc = load_checkpoint(dir / ("checkpoints/monthly_PCMCIplus" + suffix));
    CHECK(pc.features == pc_features);
    CHECK(pc.model.shape().features == pc.features.size());
    const auto gc = load_checkpoint(dir / ("checkpoints/monthly_GC" + suffix));
    CHECK(std::set<std::string>(gc.features.begin(), gc.features.end()) == gc_selected);
    CHECK(gc.model.shape().features == gc.features.size());
    CHECK(gc.lead == lead);
    CHECK(gc.target == "X2");
  }
  // The planted parents reach the PCMCI+ feature set.
  CHECK(std::count(pc_features.begin(), pc_features.end(), "X0") == 1);
  CHECK(std::count(pc_features.begin(), pc_features.end(), "X1") == 1);
}

TEST_CASE("checkpoints reproduce the reported metrics") {
  TempDir dir("replay");
  const auto c = parse_experiment_config(toy_config(dir.path(), {"PCMCIplus"}));
  const auto result = run_experiment(c);
  REQUIRE(result.report.records.size() == 6);
  const auto data = load_source(*c.monthly, c.target);
  for (const auto& rec : result.report.records) {
    const auto ck = load_checkpoint(dir / ("checkpoints/monthly_PCMCIplus_lead" + std::to_string(rec.lead) + ".ckpt"));
    const auto windows = build_lag_windows(apply_normalization(data, ck.normalization), ck.features,
                                           ck.model.shape().lookback, ck.lead);
    const auto test = split_windows(windows, c.split).test;
    const auto pred = invert_normalization(nn::predict(ck.model, test), ck.normalization, ck.target);
    const auto obs = invert_normalization(test.targets, ck.normalization, ck.target);
    CHECK(rmse(pred, obs) == rec.rmse);
    CHECK(mae(pred, obs) == rec.mae);
    CHECK(r2(pred, obs) == rec.r2);
    CHECK(obs.size() == rec.n_test);
  }
}

TEST_CASE("reruns are byte identical") {
  TempDir a("det_a"), b("det_b");
  const std::vector<std::string> variants{"vanilla", "PCMCIplus"};
  auto ca = parse_experiment_config(toy_config(a.path(), variants));
  auto cb = parse_experiment_config(toy_config(b.path(), variants));
  cb.jobs = 3;
  run_experiment(ca);
  run_experiment(cb);
  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  CHECK(slurp(a / "checkpoints/monthly_PCMCIplus_lead3.ckpt") == slurp(b / "checkpoints/monthly_PCMCIplus_lead3.ckpt"));

  TempDir other("det_c");
  auto cc = parse_experiment_config(toy_config(other.path(), variants));
  cc.seed = 8;
  run_experiment(cc);
  CHECK(slurp(a / "report.csv") != slurp(other / "report.csv"));
}

TEST_CASE("a failing cell is recorded and the rest proceed") {
  TempDir dir("isolate");
  json j = toy_config(dir.path(), {"vanilla", "DPCMCIplus"});
  j["daily"] = {{"path", (dir / "no_such_daily.csv").string()}, {"forecast", false}};
  const auto c = parse_experiment_config(j);
  std::vector<std::string> progress;
  const auto result = run_experiment(c, [&](const std::string& line) { progress.push_back(line); });
  CHECK(result.report.records.size() == 6);
  REQUIRE(result.report.failures.size() == 6);
  for (const auto& r : result.report.records) CHECK(r.variant == "vanilla");
  for (const auto& f : result.report.failures) {
    CHECK(f.variant == "DPCMCIplus");
    CHECK(f.error.find("daily") != std::string::npos);
  }
  const auto table = metrics_table_csv(result.report, "monthly");
  CHECK(table.find("failed") != std::string::npos);
  CHECK(to_json(result.report).at("failures").size() == 6);
  CHECK_FALSE(progress.empty());
}

TEST_CASE("nan percentages serialize as text") {
  EvalReport report;
  report.records.push_back({"monthly", "vanilla", 1, 1.0, 0.5, std::nan(""), std::nan(""), 0.25, 10});
  CHECK(report_csv(report) == "frequency,variant,lead,rmse,mae,rmse_pct,mae_pct,r2,n_test\nmonthly,vanilla,1,1,0.5,nan,nan,0.25,10\n");
  CHECK(to_json(report).at("records")[0].at("rmse_pct") == "nan");
  CHECK(metrics_table_csv(report, "monthly") == "lead_time,metric,vanilla\n1,RMSE (%),nan\n1,MAE (%),nan\n");
}

}  // TEST_SUITE
