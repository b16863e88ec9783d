#include "causalcast/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "causalcast/checkpoint.hpp"
#include "causalcast/dataset.hpp"
#include "causalcast/metrics.hpp"
#include "causalcast/mvgc.hpp"
#include "causalcast/pcmci.hpp"
#include "causalcast/pipeline.hpp"
#include "causalcast/seed.hpp"
#include "causalcast/synthetic.hpp"

namespace causalcast {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateTimestamp:
    case ErrorCode::ParseError:
    case ErrorCode::UnknownTarget:
    case ErrorCode::UnknownVariable:
    case ErrorCode::IrregularSpacing:
    case ErrorCode::AllMissingColumn:
    case ErrorCode::EmptySplit:
    case ErrorCode::StatsMismatch:
    case ErrorCode::InsufficientHistory:
    case ErrorCode::InvalidArgument:
    case ErrorCode::NonStationary:
    case ErrorCode::ShapeError:
    case ErrorCode::ConfigError:
      return 2;
    default:
      return 1;
  }
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

/// Run manifest: what ran, with which inputs, and every file it wrote.
struct Manifest {
  Manifest(std::string command_, json inputs_) : command(std::move(command_)), inputs(std::move(inputs_)) {}

  std::string command;
  json inputs;
  std::uint64_t seed = 0;
  std::string started = utc_now();
  std::vector<fs::path> artifacts;

  void write(const fs::path& path, const fs::path& relative_to = {}) const {
    json files = json::array();
    for (const auto& a : artifacts) {
      files.push_back(relative_to.empty() ? a.string() : fs::relative(a, relative_to).generic_string());
    }
    const std::string canonical = inputs.dump();
    const json j = {{"command", command},
                    {"config_hash", "fnv1a64:" + hex64(fnv1a(canonical))},
                    {"inputs", inputs},
                    {"seed", seed},
                    {"version", std::string(kVersion)},
                    {"started", started},
                    {"finished", utc_now()},
                    {"artifacts", files}};
    write_file(path, j.dump(2) + "\n");
  }
};

Frequency freq_of(const std::string& s) {
  try {
    return parse_frequency(s);
  } catch (const Error&) {
    throw Error(ErrorCode::InvalidArgument, "frequency must be 'daily' or 'monthly', got '" + s + "'");
  }
}

std::string mvgc_dot(const MvgcReport& r) {
  std::string out = "digraph causal_graph {\n  rankdir=LR;\n";
  for (const auto& v : r.variables) out += "  " + dot_quote(v) + ";\n";
  for (const auto& g : r.results) {
    if (g.selected) {
      out += "  " + dot_quote(g.variable) + " -> " + dot_quote(r.target) + " [label=\"1.." + std::to_string(r.max_lag) + "\"];\n";
    }
  }
  return out + "}\n";
}

/// Input columns named by a graph file, or every column for "all".
std::vector<std::string> features_from(const std::string& spec, const TimeSeriesDataset& ds) {
  if (spec == "all") return ds.variable_names();
  const json j = read_json(spec);
  const std::string method = j.value("method", "");
  FeatureSet fs;
  if (method == "mvgc") {
    fs = select_features_gc(mvgc_report_from_json(j));
  } else if (method == "pcmci+") {
    fs = select_features_pcmci(causal_graph_from_json(j), ds.target_name());
  } else if (method == "planted") {
    const auto g = synthetic::planted_graph_from_json(j);
    fs = make_feature_set(FeatureMethod::PCMCIplus, ds.variable_names(), ds.target_name(), g.parents_of(ds.target_name()));
  } else {
    throw Error(ErrorCode::InvalidArgument, spec + ": unknown graph method '" + method + "'");
  }
  for (const auto& f : fs.features) ds.column_index(f);
  // Keep dataset column order, restricted to the chosen names.
  const std::set<std::string> chosen(fs.features.begin(), fs.features.end());
  return make_feature_set(fs.method, ds.variable_names(), ds.target_name(), chosen).features;
}

/// Report label for a --features-from argument: the discovery method's variant
/// name, or "planted" for a ground-truth graph.
std::string variant_of(const std::string& spec) {
  if (spec == "all") return "vanilla";
  const std::string method = read_json(spec).value("method", "");
  if (method == "mvgc") return std::string(to_string(FeatureMethod::GC));
  if (method == "pcmci+") return std::string(to_string(FeatureMethod::PCMCIplus));
  return method;
}

struct Options {
  // shared
  std::string dataset, frequency = "monthly", target, output, manifest;
  unsigned jobs = 1;
  // preprocess
  std::string input, aggregate, summary;
  // discover
  std::string method = "pcmci+", fdr = "bh", train_end;
  std::size_t max_lag = 21, max_samples = 0;
  double alpha = 0.05;
  // train / evaluate
  std::string features_from = "all", test_begin, test_end;
  std::size_t lead = 1, lead_step = 1, lookback = 21;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  nn::TrainConfig training;
  std::size_t gru = 64, lstm = 128, dense = 64;
  double dropout = 0.2;
  std::vector<std::string> checkpoints;
  // experiment
  std::string config, output_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<unsigned> jobs_override;
  // synth
  std::string graph;
  std::size_t random_vars = 0, random_links = 0, length = 1000;
  std::uint64_t graph_seed = 0;
  std::string start = "1979-01-01", graph_output;
};

int cmd_preprocess(const Options& o, std::ostream& out) {
  Manifest m{"preprocess", {{"input", o.input}, {"frequency", o.frequency}, {"target", o.target}, {"aggregate", o.aggregate}}};
  auto ds = impute(load_csv(o.input, o.target, freq_of(o.frequency)));
  if (!o.aggregate.empty()) {
    if (o.aggregate != "monthly") throw Error(ErrorCode::InvalidArgument, "--aggregate only supports 'monthly'");
    ds = aggregate_daily_to_monthly(ds);
  }
  save_csv(ds, o.output);
  m.artifacts.push_back(o.output);
  const fs::path summary = o.summary.empty() ? fs::path(o.output + ".summary.json") : fs::path(o.summary);
  write_file(summary, dataset_summary(ds).dump(2) + "\n");
  m.artifacts.push_back(summary);
  if (!o.manifest.empty()) m.write(o.manifest);
  out << "wrote " << o.output << " (" << ds.rows() << " rows, " << ds.cols() << " variables)\n";
  return 0;
}

int cmd_discover(const Options& o, std::ostream& out) {
  Manifest m{"discover",
             {{"dataset", o.dataset}, {"method", o.method}, {"max_lag", o.max_lag}, {"alpha", o.alpha},
              {"fdr", o.fdr}, {"target", o.target}, {"train_end", o.train_end}}};
  auto ds = impute(load_csv(o.dataset, o.target, freq_of(o.frequency)));
  if (!o.train_end.empty()) ds = ds.truncate_after(Date::parse(o.train_end));
  if (o.fdr != "bh" && o.fdr != "none") throw Error(ErrorCode::InvalidArgument, "--fdr must be 'bh' or 'none'");
  json graph;
  std::string dot;
  if (o.method == "mvgc" || o.method == "GC") {
    const auto report = mvgc_test(ds, o.target, {o.max_lag, o.alpha, o.fdr == "bh", o.jobs});
    graph = to_json(report);
    dot = mvgc_dot(report);
    out << "selected:";
    for (const auto& r : report.results) {
      if (r.selected) out << " " << r.variable;
    }
    out << "\n";
  } else if (o.method == "pcmci+" || o.method == "pcmci") {
    PcmciOptions po;
    po.max_lag = o.max_lag;
    po.pc_alpha = o.alpha;
    po.fdr = o.fdr == "bh" ? FdrMethod::BenjaminiHochberg : FdrMethod::None;
    po.max_samples = o.max_samples;
    po.jobs = o.jobs;
    const auto g = run_pcmci_plus(ds, po);
    graph = to_json(g);
    dot = to_dot(g);
    out << g.links.size() << " links\n";
  } else {
    throw Error(ErrorCode::InvalidArgument, "--method must be 'mvgc' or 'pcmci+'");
  }
  const fs::path json_path = o.output + ".json", dot_path = o.output + ".dot";
  write_file(json_path, graph.dump(2) + "\n");
  write_file(dot_path, dot);
  m.artifacts = {json_path, dot_path};
  if (!o.manifest.empty()) m.write(o.manifest);
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  Manifest m{"train",
             {{"dataset", o.dataset}, {"features_from", o.features_from}, {"lead", o.lead}, {"lead_step", o.lead_step},
              {"lookback", o.lookback}, {"train_end", o.train_end}, {"test_begin", o.test_begin},
              {"test_end", o.test_end}, {"training", to_json(o.training)}}};
  m.seed = o.seed;
  const auto freq = freq_of(o.frequency);
  const auto ds = impute(load_csv(o.dataset, o.target, freq));
  const auto features = features_from(o.features_from, ds);
  SplitSpec split{Date::parse(o.train_end), o.validation_fraction, Date::parse(o.test_begin), Date::parse(o.test_end)};
  split.validate();
  const auto stats = fit_normalization(ds, split);
  const auto windows = build_lag_windows(apply_normalization(ds, stats), features, o.lookback, o.lead * o.lead_step);
  const auto parts = split_windows(windows, split);
  nn::NetworkShape shape{features.size(), o.gru, o.lstm, o.dense, o.lookback, o.dropout};
  auto model = nn::RecurrentModel::initialized(shape, derive_seed(o.seed, "init"));
  auto tc = o.training;
  tc.seed = derive_seed(o.seed, "train");
  const auto history = nn::train(model, parts.train, parts.validation, tc);

  Checkpoint ck;
  ck.model = std::move(model);
  ck.features = features;
  ck.target = o.target;
  ck.lead = o.lead;
  ck.variant = variant_of(o.features_from);
  ck.frequency = freq;
  ck.normalization = stats;
  ck.train_config = tc;
  ck.metadata = {{"lead_rows", o.lead * o.lead_step},     {"train_end", o.train_end},
                 {"test_begin", o.test_begin},            {"test_end", o.test_end},
                 {"validation_fraction", o.validation_fraction}, {"best_epoch", history.best_epoch},
                 {"epochs_run", history.epochs_run}};
  save_checkpoint(ck, o.output);
  m.artifacts.push_back(o.output);
  if (!o.manifest.empty()) m.write(o.manifest);
  out << "trained " << history.epochs_run << " epochs (best " << history.best_epoch << ", validation MSE "
      << history.validation_loss[history.best_epoch] << "); wrote " << o.output << "\n";
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  Manifest m{"evaluate", {{"dataset", o.dataset}, {"checkpoints", o.checkpoints}}};
  EvalReport report;
  for (const auto& path : o.checkpoints) {
    const auto ck = load_checkpoint(path);
    const auto ds = impute(load_csv(o.dataset, ck.target, ck.frequency));
    const std::size_t lead_rows = ck.metadata.value("lead_rows", ck.lead);
    const auto windows = build_lag_windows(apply_normalization(ds, ck.normalization), ck.features,
                                           ck.model.shape().lookback, lead_rows);
    const Date begin = Date::parse(o.test_begin.empty() ? ck.metadata.at("test_begin").get<std::string>() : o.test_begin);
    const Date end = Date::parse(o.test_end.empty() ? ck.metadata.at("test_end").get<std::string>() : o.test_end);
    std::vector<std::size_t> idx;
    for (std::size_t s = 0; s < windows.size(); ++s) {
      if (windows.sample_dates[s] >= begin && windows.sample_dates[s] <= end) idx.push_back(s);
    }
    if (idx.empty()) throw Error(ErrorCode::EmptySplit, path + ": no test samples in range");
    const auto test = windows.subset(idx);
    const auto pred = invert_normalization(nn::predict(ck.model, test), ck.normalization, ck.target);
    const auto obs = invert_normalization(test.targets, ck.normalization, ck.target);
    EvalRecord r{std::string(to_string(ck.frequency)), ck.variant, ck.lead, rmse(pred, obs), mae(pred, obs), 0, 0, 0,
                 obs.size()};
    const auto pct = percentage_metrics(r.rmse, r.mae, obs);
    r.rmse_pct = pct.rmse_pct;
    r.mae_pct = pct.mae_pct;
    r.r2 = r2(pred, obs);
    report.records.push_back(r);
  }
  const fs::path csv = o.output + ".csv", js = o.output + ".json";
  write_file(csv, report_csv(report));
  write_file(js, to_json(report).dump(2) + "\n");
  m.artifacts = {csv, js};
  if (!o.manifest.empty()) m.write(o.manifest);
  out << report_csv(report);
  return 0;
}

int cmd_experiment(const Options& o, std::ostream& out, std::ostream& err) {
  const json raw = read_json(o.config);
  json effective = raw;
  if (!effective.is_object()) throw Error(ErrorCode::ConfigError, "'<root>': expected an object");
  if (!o.output_dir.empty()) {
    effective["output_dir"] = fs::absolute(o.output_dir).string();
  } else if (!effective.contains("output_dir")) {
    const char* env = std::getenv("CAUSALCAST_OUTPUT_DIR");
    if (env && *env) effective["output_dir"] = fs::absolute(env).string();
  }
  if (o.seed_override) effective["seed"] = *o.seed_override;
  if (o.jobs_override) effective["jobs"] = *o.jobs_override;
  auto config = parse_experiment_config(effective, fs::path(o.config).parent_path());

  Manifest m{"experiment", to_json(config)};
  m.seed = config.seed;
  auto result = run_experiment(config, [&](const std::string& line) { err << line << "\n"; });
  m.artifacts = result.artifacts;
  const auto manifest_path = config.output_dir / "manifest.json";
  m.artifacts.push_back(manifest_path);
  m.write(manifest_path, config.output_dir);

  out << report_csv(result.report);
  for (const auto& f : result.report.failures) {
    err << "failed: " << f.frequency << " " << f.variant << " lead " << f.lead << ": " << f.error << "\n";
  }
  return result.report.failures.empty() ? 0 : 1;
}

int cmd_synth(const Options& o, std::ostream& out) {
  Manifest m{"synth",
             {{"graph", o.graph}, {"random_vars", o.random_vars}, {"random_links", o.random_links},
              {"graph_seed", o.graph_seed}, {"length", o.length}, {"frequency", o.frequency}, {"start", o.start}}};
  m.seed = o.seed;
  synthetic::PlantedGraph g;
  if (!o.graph.empty()) {
    try {
      g = synthetic::planted_graph_from_json(read_json(o.graph));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, o.graph + ": " + e.what());
    }
  } else if (o.random_vars > 0) {
    g = synthetic::random_planted_graph(o.random_vars, o.random_links, o.graph_seed);
  } else {
    throw Error(ErrorCode::InvalidArgument, "give --graph or --random-vars");
  }
  synthetic::GenerateOptions go;
  go.frequency = freq_of(o.frequency);
  go.start = Date::parse(o.start);
  go.target = o.target;
  const auto ds = synthetic::generate_var(g, o.length, o.seed, go);
  save_csv(ds, o.output);
  m.artifacts.push_back(o.output);
  const fs::path graph_out = o.graph_output.empty() ? fs::path(o.output + ".graph.json") : fs::path(o.graph_output);
  write_file(graph_out, synthetic::to_json(g).dump(2) + "\n");
  m.artifacts.push_back(graph_out);
  if (!o.manifest.empty()) m.write(o.manifest);
  out << "wrote " << o.output << " (" << ds.rows() << " rows, target " << ds.target_name() << ")\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal feature discovery and recurrent forecasting for multivariate time series", "causalcast"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--frequency", o.frequency, "daily or monthly")->capture_default_str();
    c->add_option("--target", o.target, "Target variable");
  };

  auto* pre = app.add_subcommand("preprocess", "Load, impute and optionally aggregate a CSV");
  pre->add_option("--input,-i", o.input, "Input CSV")->required();
  pre->add_option("--output,-o", o.output, "Canonical output CSV")->required();
  pre->add_option("--aggregate", o.aggregate, "Aggregate daily input to 'monthly'");
  pre->add_option("--summary", o.summary, "Summary JSON path (default: <output>.summary.json)");
  pre->add_option("--manifest", o.manifest, "Write a run manifest");
  common(pre);
  pre->get_option("--target")->required();

  auto* disc = app.add_subcommand("discover", "Causal discovery with MVGC or PCMCI+");
  disc->add_option("--dataset,-d", o.dataset, "Dataset CSV")->required();
  disc->add_option("--method,-m", o.method, "mvgc or pcmci+")->capture_default_str();
  disc->add_option("--max-lag", o.max_lag)->capture_default_str();
  disc->add_option("--alpha", o.alpha)->capture_default_str();
  disc->add_option("--fdr", o.fdr, "bh or none")->capture_default_str();
  disc->add_option("--max-samples", o.max_samples, "PCMCI+ uses only the latest rows (0 = all)");
  disc->add_option("--train-end", o.train_end, "Discover on rows up to this date");
  disc->add_option("--output,-o", o.output, "Output prefix for .json and .dot")->required();
  disc->add_option("--jobs,-j", o.jobs)->capture_default_str();
  disc->add_option("--manifest", o.manifest, "Write a run manifest");
  common(disc);
  disc->get_option("--target")->required();

  auto training = [&](CLI::App* c) {
    c->add_option("--epochs", o.training.max_epochs)->capture_default_str();
    c->add_option("--patience", o.training.patience)->capture_default_str();
    c->add_option("--batch-size", o.training.batch_size)->capture_default_str();
    c->add_option("--lr", o.training.learning_rate)->capture_default_str();
    c->add_option("--gru", o.gru)->capture_default_str();
    c->add_option("--lstm", o.lstm)->capture_default_str();
    c->add_option("--dense", o.dense)->capture_default_str();
    c->add_option("--dropout", o.dropout)->capture_default_str();
  };

  auto* tr = app.add_subcommand("train", "Train one forecaster and write a checkpoint");
  tr->add_option("--dataset,-d", o.dataset)->required();
  tr->add_option("--features-from", o.features_from, "Graph JSON or 'all'")->capture_default_str();
  tr->add_option("--lead", o.lead)->capture_default_str();
  tr->add_option("--lead-step", o.lead_step, "Rows per lead unit (30 for daily data, month leads)")->capture_default_str();
  tr->add_option("--lookback", o.lookback)->capture_default_str();
  tr->add_option("--train-end", o.train_end)->required();
  tr->add_option("--test-begin", o.test_begin)->required();
  tr->add_option("--test-end", o.test_end)->required();
  tr->add_option("--validation-fraction", o.validation_fraction)->capture_default_str();
  tr->add_option("--seed", o.seed)->capture_default_str();
  tr->add_option("--output,-o", o.output, "Checkpoint path")->required();
  tr->add_option("--manifest", o.manifest, "Write a run manifest");
  training(tr);
  common(tr);
  tr->get_option("--target")->required();

  auto* ev = app.add_subcommand("evaluate", "Evaluate checkpoints on a dataset's test range");
  ev->add_option("--checkpoint,-c", o.checkpoints)->required();
  ev->add_option("--dataset,-d", o.dataset)->required();
  ev->add_option("--test-begin", o.test_begin, "Override the checkpoint's test range");
  ev->add_option("--test-end", o.test_end);
  ev->add_option("--output,-o", o.output, "Output prefix for .csv and .json")->required();
  ev->add_option("--manifest", o.manifest, "Write a run manifest");

  auto* ex = app.add_subcommand("experiment", "Run a full experiment from a JSON config");
  ex->add_option("--config,-c", o.config)->required();
  ex->add_option("--output-dir", o.output_dir, "Overrides output_dir");
  ex->add_option("--seed", o.seed_override, "Overrides seed");
  ex->add_option("--jobs,-j", o.jobs_override, "Overrides jobs");

  auto* sy = app.add_subcommand("synth", "Simulate a planted VAR graph to CSV");
  sy->add_option("--graph", o.graph, "Planted graph JSON");
  sy->add_option("--random-vars", o.random_vars);
  sy->add_option("--random-links", o.random_links);
  sy->add_option("--graph-seed", o.graph_seed);
  sy->add_option("--length,-T", o.length)->capture_default_str();
  sy->add_option("--seed", o.seed)->capture_default_str();
  sy->add_option("--start", o.start)->capture_default_str();
  sy->add_option("--output,-o", o.output)->required();
  sy->add_option("--graph-output", o.graph_output, "Default: <output>.graph.json");
  sy->add_option("--manifest", o.manifest, "Write a run manifest");
  common(sy);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("causalcast");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*pre) return cmd_preprocess(o, out);
    if (*disc) return cmd_discover(o, out);
    if (*tr) return cmd_train(o, out);
    if (*ev) return cmd_evaluate(o, out);
    if (*ex) return cmd_experiment(o, out, err);
    if (*sy) return cmd_synth(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace causalcast
