#include "causalcast/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "causalcast/checkpoint.hpp"
#include "causalcast/error.hpp"
#include "causalcast/metrics.hpp"
#include "causalcast/mvgc.hpp"
#include "causalcast/parallel.hpp"
#include "causalcast/seed.hpp"

namespace causalcast {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config parsing

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ConfigError, "'" + path + "': " + what);
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

/// Typed access to one JSON object that remembers its key path and rejects
/// keys it was never asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    if (!has(key)) config_error(join(path_, key), "missing required key");
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    return convert<T>(raw(key), join(path_, key));
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    return has(key) ? convert<T>(j_.at(key), join(path_, key)) : fallback;
  }

  Section child(const std::string& key) { return {raw(key), join(path_, key)}; }
  std::string path(const std::string& key) const { return join(path_, key); }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (seen_.count(key) == 0) config_error(join(path_, key), "unknown key");
    }
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) config_error(path, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
        config_error(path, "expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) config_error(path, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) config_error(path, "expected a string");
    }
    return v.get<T>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Date parse_date_at(const std::string& text, const std::string& path) {
  try {
    return Date::parse(text);
  } catch (const Error& e) {
    config_error(path, e.detail());
  }
}

SyntheticSource parse_synthetic(Section s) {
  SyntheticSource out;
  try {
    out.graph = synthetic::planted_graph_from_json(s.raw("graph"));
  } catch (const json::exception& e) {
    config_error(s.path("graph"), e.what());
  } catch (const Error& e) {
    config_error(s.path("graph"), e.detail());
  }
  out.length = s.get<std::size_t>("length");
  out.seed = s.get<std::uint64_t>("seed", 0);
  if (s.has("start")) out.start = parse_date_at(s.get<std::string>("start"), s.path("start"));
  if (s.has("offsets")) {
    const auto& o = s.raw("offsets");
    if (!o.is_object()) config_error(s.path("offsets"), "expected an object of name -> number");
    for (const auto& [name, value] : o.items()) {
      out.offsets.emplace_back(name, Section::convert<double>(value, s.path("offsets") + "." + name));
    }
  }
  s.reject_unknown();
  return out;
}

DataSource parse_source(Section s, Frequency frequency, const fs::path& base_dir) {
  DataSource src;
  src.frequency = frequency;
  const bool has_path = s.has("path"), has_synth = s.has("synthetic");
  if (has_path == has_synth) config_error(s.path("path"), "give exactly one of 'path' or 'synthetic'");
  if (has_path) {
    fs::path p = s.get<std::string>("path");
    src.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  } else {
    src.synthetic = parse_synthetic(s.child("synthetic"));
  }
  if (s.has("variants")) {
    const auto& v = s.raw("variants");
    if (!v.is_array()) config_error(s.path("variants"), "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto key = s.path("variants") + "[" + std::to_string(i) + "]";
      try {
        src.variants.push_back(parse_feature_method(Section::convert<std::string>(v[i], key)));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError) throw;
        config_error(key, e.detail());
      }
    }
  } else if (frequency == Frequency::Daily) {
    src.variants = {FeatureMethod::All, FeatureMethod::GC, FeatureMethod::PCMCIplus};
  } else {
    src.variants = {FeatureMethod::All, FeatureMethod::GC, FeatureMethod::PCMCIplus, FeatureMethod::DPCMCIplus};
  }
  src.forecast = s.get<bool>("forecast", true);
  src.lead_step = s.get<std::size_t>("lead_step", frequency == Frequency::Daily ? 30 : 1);
  s.reject_unknown();
  return src;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (target.empty()) config_error("target", "must be non-empty");
  if (lookback < 1) config_error("lookback", "must be >= 1");
  if (leads.empty()) config_error("leads", "must be non-empty");
  for (const auto l : leads) {
    if (l < 1) config_error("leads", "every lead must be >= 1");
  }
  if (!daily && !monthly) config_error("monthly", "at least one of 'daily' or 'monthly' is required");
  if (daily) {
    for (const auto v : daily->variants) {
      if (v == FeatureMethod::DPCMCIplus) config_error("daily.variants", "DPCMCIplus is only allowed for monthly runs");
    }
    if (daily->lead_step < 1) config_error("daily.lead_step", "must be >= 1");
  }
  if (monthly) {
    const bool wants_d = std::count(monthly->variants.begin(), monthly->variants.end(), FeatureMethod::DPCMCIplus) > 0;
    if (wants_d && !daily) config_error("daily", "DPCMCIplus needs a daily source for discovery");
    if (monthly->lead_step < 1) config_error("monthly.lead_step", "must be >= 1");
  }
  for (const auto* src : {daily ? &*daily : nullptr, monthly ? &*monthly : nullptr}) {
    if (src && src->synthetic && src->synthetic->length < 100) {
      config_error(std::string(src->frequency == Frequency::Daily ? "daily" : "monthly") + ".synthetic.length",
                   "must be >= 100");
    }
  }
  try {
    split.validate();
  } catch (const Error& e) {
    config_error("split", e.detail());
  }
  if (discovery.max_lag < 1) config_error("discovery.max_lag", "must be >= 1");
  if (!(discovery.mvgc_alpha > 0.0 && discovery.mvgc_alpha < 1.0)) config_error("discovery.mvgc_alpha", "must be in (0, 1)");
  if (!(discovery.pc_alpha > 0.0 && discovery.pc_alpha < 1.0)) config_error("discovery.pc_alpha", "must be in (0, 1)");
  try {
    training.validate();
  } catch (const Error& e) {
    config_error("training", e.detail());
  }
  try {
    nn::NetworkShape{1, model.gru_hidden, model.lstm_hidden, model.dense, lookback, model.dropout}.validate();
  } catch (const Error& e) {
    config_error("model", e.detail());
  }
}

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  Section root(j, "");
  c.seed = root.get<std::uint64_t>("seed");
  c.target = root.get<std::string>("target");
  c.lookback = root.get<std::size_t>("lookback", c.lookback);
  if (root.has("leads")) {
    const auto& leads = root.raw("leads");
    if (!leads.is_array()) config_error("leads", "expected an array");
    c.leads.clear();
    for (std::size_t i = 0; i < leads.size(); ++i) {
      c.leads.push_back(Section::convert<std::size_t>(leads[i], "leads[" + std::to_string(i) + "]"));
    }
  }
  if (root.has("daily")) c.daily = parse_source(root.child("daily"), Frequency::Daily, base_dir);
  if (root.has("monthly")) c.monthly = parse_source(root.child("monthly"), Frequency::Monthly, base_dir);

  {
    Section s = root.child("split");
    c.split.train_end = parse_date_at(s.get<std::string>("train_end"), "split.train_end");
    c.split.test_begin = parse_date_at(s.get<std::string>("test_begin"), "split.test_begin");
    c.split.test_end = parse_date_at(s.get<std::string>("test_end"), "split.test_end");
    c.split.validation_fraction = s.get<double>("validation_fraction", c.split.validation_fraction);
    s.reject_unknown();
  }
  if (root.has("discovery")) {
    Section s = root.child("discovery");
    auto& d = c.discovery;
    d.max_lag = s.get<std::size_t>("max_lag", d.max_lag);
    d.mvgc_alpha = s.get<double>("mvgc_alpha", d.mvgc_alpha);
    d.pc_alpha = s.get<double>("pc_alpha", d.pc_alpha);
    d.max_samples = s.get<std::size_t>("max_samples", d.max_samples);
    if (s.has("fdr")) {
      const auto f = s.get<std::string>("fdr");
      if (f != "bh" && f != "none") config_error("discovery.fdr", "expected \"bh\" or \"none\"");
      d.fdr = f == "bh";
    }
    s.reject_unknown();
  }
  if (root.has("training")) {
    Section s = root.child("training");
    auto& t = c.training;
    t.batch_size = s.get<std::size_t>("batch_size", t.batch_size);
    t.max_epochs = s.get<std::size_t>("max_epochs", t.max_epochs);
    t.patience = s.get<std::size_t>("patience", t.patience);
    t.learning_rate = s.get<double>("learning_rate", t.learning_rate);
    s.reject_unknown();
  }
  if (root.has("model")) {
    Section s = root.child("model");
    auto& m = c.model;
    m.gru_hidden = s.get<std::size_t>("gru_hidden", m.gru_hidden);
    m.lstm_hidden = s.get<std::size_t>("lstm_hidden", m.lstm_hidden);
    m.dense = s.get<std::size_t>("dense", m.dense);
    m.dropout = s.get<double>("dropout", m.dropout);
    s.reject_unknown();
  }
  if (root.has("output_dir")) {
    fs::path p = root.get<std::string>("output_dir");
    c.output_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  c.jobs = root.get<unsigned>("jobs", 1u);
  if (root.has("$schema")) root.raw("$schema");
  root.reject_unknown();
  c.training.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  auto source = [](const DataSource& s) {
    json j;
    if (s.path) j["path"] = s.path->string();
    if (s.synthetic) {
      json offsets = json::object();
      for (const auto& [name, value] : s.synthetic->offsets) offsets[name] = value;
      j["synthetic"] = {{"graph", synthetic::to_json(s.synthetic->graph)},
                        {"length", s.synthetic->length},
                        {"seed", s.synthetic->seed},
                        {"start", s.synthetic->start.iso()},
                        {"offsets", offsets}};
    }
    json variants = json::array();
    for (const auto v : s.variants) variants.push_back(std::string(to_string(v)));
    j["variants"] = variants;
    j["forecast"] = s.forecast;
    j["lead_step"] = s.lead_step;
    return j;
  };
  json j = {{"seed", c.seed},
            {"target", c.target},
            {"lookback", c.lookback},
            {"leads", c.leads},
            {"split",
             {{"train_end", c.split.train_end.iso()},
              {"validation_fraction", c.split.validation_fraction},
              {"test_begin", c.split.test_begin.iso()},
              {"test_end", c.split.test_end.iso()}}},
            {"discovery",
             {{"max_lag", c.discovery.max_lag},
              {"mvgc_alpha", c.discovery.mvgc_alpha},
              {"pc_alpha", c.discovery.pc_alpha},
              {"fdr", c.discovery.fdr ? "bh" : "none"},
              {"max_samples", c.discovery.max_samples}}},
            {"training",
             {{"batch_size", c.training.batch_size},
              {"max_epochs", c.training.max_epochs},
              {"patience", c.training.patience},
              {"learning_rate", c.training.learning_rate}}},
            {"model",
             {{"gru_hidden", c.model.gru_hidden},
              {"lstm_hidden", c.model.lstm_hidden},
              {"dense", c.model.dense},
              {"dropout", c.model.dropout}}},
            {"output_dir", c.output_dir.string()},
            {"jobs", c.jobs}};
  if (c.daily) j["daily"] = source(*c.daily);
  if (c.monthly) j["monthly"] = source(*c.monthly);
  return j;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, r.ptr};
}

std::string fixed3(double v) {
  if (!std::isfinite(v)) return number(v);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

json json_number(double v) { return std::isfinite(v) ? json(v) : json(number(v)); }

/// Variants in first-appearance order for one frequency.
std::vector<std::string> variants_of(const EvalReport& report, const std::string& frequency) {
  std::vector<std::string> out;
  auto note = [&](const std::string& v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  for (const auto& r : report.records) {
    if (r.frequency == frequency) note(r.variant);
  }
  for (const auto& f : report.failures) {
    if (f.frequency == frequency) note(f.variant);
  }
  return out;
}

std::vector<std::size_t> leads_of(const EvalReport& report, const std::string& frequency) {
  std::set<std::size_t> leads;
  for (const auto& r : report.records) {
    if (r.frequency == frequency) leads.insert(r.lead);
  }
  for (const auto& f : report.failures) {
    if (f.frequency == frequency) leads.insert(f.lead);
  }
  return {leads.begin(), leads.end()};
}

const EvalRecord* find_record(const EvalReport& report, const std::string& frequency, const std::string& variant,
                              std::size_t lead) {
  for (const auto& r : report.records) {
    if (r.frequency == frequency && r.variant == variant && r.lead == lead) return &r;
  }
  return nullptr;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "frequency,variant,lead,rmse,mae,rmse_pct,mae_pct,r2,n_test\n";
  for (const auto& r : report.records) {
    out += r.frequency + "," + r.variant + "," + std::to_string(r.lead) + "," + number(r.rmse) + "," +
           number(r.mae) + "," + number(r.rmse_pct) + "," + number(r.mae_pct) + "," + number(r.r2) + "," +
           std::to_string(r.n_test) + "\n";
  }
  return out;
}

json to_json(const EvalReport& report) {
  json records = json::array(), failures = json::array();
  for (const auto& r : report.records) {
    records.push_back({{"frequency", r.frequency},
                       {"variant", r.variant},
                       {"lead", r.lead},
                       {"rmse", json_number(r.rmse)},
                       {"mae", json_number(r.mae)},
                       {"rmse_pct", json_number(r.rmse_pct)},
                       {"mae_pct", json_number(r.mae_pct)},
                       {"r2", json_number(r.r2)},
                       {"n_test", r.n_test}});
  }
  for (const auto& f : report.failures) {
    failures.push_back({{"frequency", f.frequency}, {"variant", f.variant}, {"lead", f.lead}, {"error", f.error}});
  }
  return {{"records", records}, {"failures", failures}};
}

std::string metrics_table_csv(const EvalReport& report, const std::string& frequency) {
  const auto variants = variants_of(report, frequency);
  std::string out = "lead_time,metric";
  for (const auto& v : variants) out += "," + v;
  out += "\n";
  for (const auto lead : leads_of(report, frequency)) {
    for (const bool is_rmse : {true, false}) {
      out += std::to_string(lead) + (is_rmse ? ",RMSE (%)" : ",MAE (%)");
      for (const auto& v : variants) {
        const auto* r = find_record(report, frequency, v, lead);
        out += "," + (r ? fixed3(is_rmse ? r->rmse_pct : r->mae_pct) : std::string("failed"));
      }
      out += "\n";
    }
  }
  return out;
}

std::string r2_series_csv(const EvalReport& report, const std::string& frequency) {
  const auto variants = variants_of(report, frequency);
  std::string out = "lead";
  for (const auto& v : variants) out += "," + v;
  out += "\n";
  for (const auto lead : leads_of(report, frequency)) {
    out += std::to_string(lead);
    for (const auto& v : variants) {
      const auto* r = find_record(report, frequency, v, lead);
      out += "," + (r ? number(r->r2) : std::string("nan"));
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment

TimeSeriesDataset load_source(const DataSource& source, const std::string& target) {
  if (source.path) return impute(load_csv(*source.path, target, source.frequency));
  if (!source.synthetic) throw Error(ErrorCode::ConfigError, "data source has neither path nor synthetic block");
  const auto& s = *source.synthetic;
  synthetic::GenerateOptions opts;
  opts.frequency = source.frequency;
  opts.start = s.start;
  opts.target = target;
  if (std::find(s.graph.variables.begin(), s.graph.variables.end(), target) == s.graph.variables.end()) {
    throw Error(ErrorCode::UnknownTarget, "target '" + target + "' is not a synthetic variable");
  }
  auto ds = synthetic::generate_var(s.graph, s.length, s.seed, opts);
  if (s.offsets.empty()) return ds;
  Eigen::MatrixXd values = ds.values();
  for (const auto& [name, value] : s.offsets) values.col(static_cast<Eigen::Index>(ds.column_index(name))).array() += value;
  return ds.with_values(std::move(values));
}

namespace {

void write_text(const fs::path& path, const std::string& text, std::vector<fs::path>& artifacts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
  artifacts.push_back(path);
}

struct Discovery {
  std::optional<FeatureSet> gc, pcmci;
  std::string gc_error, pcmci_error;
};

Discovery discover(const TimeSeriesDataset& data, const ExperimentConfig& c, const std::string& tag,
                   std::vector<fs::path>& artifacts, const std::function<void(const std::string&)>& progress) {
  Discovery d;
  const auto train_part = data.truncate_after(c.split.train_end);
  try {
    MvgcOptions o;
    o.max_lag = c.discovery.max_lag;
    o.alpha = c.discovery.mvgc_alpha;
    o.fdr = c.discovery.fdr;
    o.jobs = c.jobs;
    const auto report = mvgc_test(train_part, c.target, o);
    d.gc = select_features_gc(report);
    write_text(c.output_dir / (tag + "_mvgc.json"), to_json(report).dump(2) + "\n", artifacts);
  } catch (const Error& e) {
    d.gc_error = std::string("MVGC discovery failed: ") + e.what();
  }
  if (progress) progress(tag + ": MVGC " + (d.gc ? "done" : d.gc_error));
  try {
    PcmciOptions o;
    o.max_lag = c.discovery.max_lag;
    o.pc_alpha = c.discovery.pc_alpha;
    o.fdr = c.discovery.fdr ? FdrMethod::BenjaminiHochberg : FdrMethod::None;
    o.max_samples = c.discovery.max_samples;
    o.jobs = c.jobs;
    const auto graph = run_pcmci_plus(train_part, o);
    d.pcmci = select_features_pcmci(graph, c.target);
    write_text(c.output_dir / (tag + "_pcmci.json"), to_json(graph).dump(2) + "\n", artifacts);
    write_text(c.output_dir / (tag + "_pcmci.dot"), to_dot(graph), artifacts);
  } catch (const Error& e) {
    d.pcmci_error = std::string("PCMCI+ discovery failed: ") + e.what();
  }
  if (progress) progress(tag + ": PCMCI+ " + (d.pcmci ? "done" : d.pcmci_error));
  return d;
}

struct Cell {
  FeatureMethod variant;
  std::size_t lead;
};

struct CellOutcome {
  std::optional<EvalRecord> record;
  std::optional<CellFailure> failure;
  std::optional<fs::path> checkpoint;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& c, const std::function<void(const std::string&)>& progress) {
  c.validate();
  fs::create_directories(c.output_dir);
  fs::create_directories(c.output_dir / "checkpoints");
  ExperimentResult result;
  auto& artifacts = result.artifacts;

  std::map<Frequency, TimeSeriesDataset> data;
  std::map<Frequency, Discovery> found;
  std::map<Frequency, std::string> load_error;
  for (const auto* src : {c.daily ? &*c.daily : nullptr, c.monthly ? &*c.monthly : nullptr}) {
    if (!src) continue;
    const std::string tag(to_string(src->frequency));
    try {
      data.emplace(src->frequency, load_source(*src, c.target));
    } catch (const Error& e) {
      load_error[src->frequency] = std::string("loading data failed: ") + e.what();
      if (progress) progress(tag + ": " + load_error[src->frequency]);
      continue;
    }
    found[src->frequency] = discover(data.at(src->frequency), c, tag, artifacts, progress);
  }

  for (const auto* src : {c.daily ? &*c.daily : nullptr, c.monthly ? &*c.monthly : nullptr}) {
    if (!src || !src->forecast) continue;
    const std::string tag(to_string(src->frequency));
    std::vector<Cell> cells;
    for (const auto v : src->variants) {
      for (const auto lead : c.leads) cells.push_back({v, lead});
    }
    std::vector<CellOutcome> outcomes(cells.size());

    const TimeSeriesDataset* raw = data.count(src->frequency) ? &data.at(src->frequency) : nullptr;
    std::optional<NormalizationStats> stats;
    std::optional<TimeSeriesDataset> normalized;
    std::string prep_error = load_error.count(src->frequency) ? load_error.at(src->frequency) : "";
    if (raw) {
      try {
        stats = fit_normalization(*raw, c.split);
        normalized = apply_normalization(*raw, *stats);
      } catch (const Error& e) {
        prep_error = std::string("normalization failed: ") + e.what();
      }
    }

    parallel_for(cells.size(), c.jobs, [&](std::size_t k) {
      const auto& cell = cells[k];
      const std::string variant(to_string(cell.variant));
      auto& out = outcomes[k];
      try {
        if (!normalized) throw Error(ErrorCode::InvalidArgument, prep_error);
        FeatureSet features;
        const auto& disc = found.at(src->frequency);
        switch (cell.variant) {
          case FeatureMethod::All:
            features = {FeatureMethod::All, raw->variable_names()};
            break;
          case FeatureMethod::GC:
            if (!disc.gc) throw Error(ErrorCode::InvalidArgument, disc.gc_error);
            features = *disc.gc;
            break;
          case FeatureMethod::PCMCIplus:
            if (!disc.pcmci) throw Error(ErrorCode::InvalidArgument, disc.pcmci_error);
            features = *disc.pcmci;
            break;
          case FeatureMethod::DPCMCIplus: {
            const auto it = found.find(Frequency::Daily);
            if (it == found.end() || !it->second.pcmci) {
              throw Error(ErrorCode::InvalidArgument,
                          it == found.end() ? "no daily discovery available" : it->second.pcmci_error);
            }
            const std::set<std::string> chosen(it->second.pcmci->features.begin(), it->second.pcmci->features.end());
            features = make_feature_set(FeatureMethod::DPCMCIplus, raw->variable_names(), c.target, chosen);
            break;
          }
        }

        const auto windows = build_lag_windows(*normalized, features.features, c.lookback, cell.lead * src->lead_step);
        const auto split = split_windows(windows, c.split);
        const std::uint64_t cell_seed =
            derive_seed(derive_seed(c.seed, tag + "/" + variant), static_cast<std::uint64_t>(cell.lead));
        nn::NetworkShape shape{features.features.size(), c.model.gru_hidden, c.model.lstm_hidden, c.model.dense,
                               c.lookback, c.model.dropout};
        auto model = nn::RecurrentModel::initialized(shape, derive_seed(cell_seed, "init"));
        nn::TrainConfig tc = c.training;
        tc.seed = derive_seed(cell_seed, "train");
        const auto history = nn::train(model, split.train, split.validation, tc);

        const auto pred_z = nn::predict(model, split.test);
        const auto pred = invert_normalization(pred_z, *stats, c.target);
        const auto obs = invert_normalization(split.test.targets, *stats, c.target);
        EvalRecord rec{tag, variant, cell.lead, rmse(pred, obs), mae(pred, obs), 0.0, 0.0, 0.0, obs.size()};
        try {
          const auto pct = percentage_metrics(rec.rmse, rec.mae, obs);
          rec.rmse_pct = pct.rmse_pct;
          rec.mae_pct = pct.mae_pct;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegeneratePercentage) throw;
          rec.rmse_pct = rec.mae_pct = std::nan("");
        }
        rec.r2 = r2(pred, obs);
        out.record = rec;

        Checkpoint ck;
        ck.model = std::move(model);
        ck.features = features.features;
        ck.target = c.target;
        ck.lead = cell.lead;
        ck.variant = variant;
        ck.frequency = src->frequency;
        ck.normalization = *stats;
        ck.train_config = tc;
        ck.metadata = {{"lead_rows", cell.lead * src->lead_step},
                       {"train_end", c.split.train_end.iso()},
                       {"test_begin", c.split.test_begin.iso()},
                       {"test_end", c.split.test_end.iso()},
                       {"validation_fraction", c.split.validation_fraction},
                       {"best_epoch", history.best_epoch},
                       {"epochs_run", history.epochs_run}};
        const auto path = c.output_dir / "checkpoints" / (tag + "_" + variant + "_lead" + std::to_string(cell.lead) + ".ckpt");
        save_checkpoint(ck, path);
        out.checkpoint = path;
      } catch (const std::exception& e) {
        out.record.reset();
        out.failure = CellFailure{tag, variant, cell.lead, e.what()};
      }
      if (progress) {
        progress(tag + " " + variant + " lead " + std::to_string(cell.lead) + ": " +
                 (out.record ? "rmse " + number(out.record->rmse) : "FAILED " + out.failure->error));
      }
    });

    for (auto& o : outcomes) {
      if (o.record) result.report.records.push_back(*o.record);
      if (o.failure) result.report.failures.push_back(*o.failure);
      if (o.checkpoint) artifacts.push_back(*o.checkpoint);
    }
    write_text(c.output_dir / ("table_" + tag + ".csv"), metrics_table_csv(result.report, tag), artifacts);
    write_text(c.output_dir / ("r2_" + tag + ".csv"), r2_series_csv(result.report, tag), artifacts);
  }

  write_text(c.output_dir / "report.csv", report_csv(result.report), artifacts);
  write_text(c.output_dir / "report.json", to_json(result.report).dump(2) + "\n", artifacts);
  return result;
}

}  // namespace causalcast
