#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "causalcast/cli.hpp"
#include "causalcast/dataset.hpp"
#include "causalcast/error.hpp"
#include "causalcast/metrics.hpp"
#include "causalcast/mvgc.hpp"
#include "causalcast/nn.hpp"
#include "causalcast/pcmci.hpp"
#include "causalcast/pipeline.hpp"
#include "causalcast/stats.hpp"
#include "causalcast/synthetic.hpp"

namespace py = pybind11;
namespace cc = causalcast;
using nlohmann::json;

namespace {

// Structured results cross the boundary as plain dicts via the json module.
py::object to_python(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_python(const py::handle& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

cc::Frequency frequency(const std::string& s) { return cc::parse_frequency(s); }

std::vector<std::string> iso_dates(const cc::TimeSeriesDataset& d) {
  std::vector<std::string> out;
  out.reserve(d.rows());
  for (const auto& t : d.timestamps()) out.push_back(t.iso());
  return out;
}

cc::TimeSeriesDataset make_dataset(std::vector<std::string> names, const std::vector<std::string>& dates,
                                   Eigen::MatrixXd values, const std::string& freq, std::string target) {
  std::vector<cc::Date> ts;
  ts.reserve(dates.size());
  for (const auto& s : dates) ts.push_back(cc::Date::parse(s));
  return {std::move(names), std::move(ts), std::move(values), frequency(freq), std::move(target)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Causal feature discovery and recurrent forecasting for multivariate time series";
  m.attr("__version__") = std::string(cc::kVersion);

  // Messages carry the error code as a prefix, e.g. "UnknownTarget: ...".
  py::register_exception<cc::Error>(m, "CausalcastError", PyExc_RuntimeError);

  py::class_<cc::TimeSeriesDataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("variables"), py::arg("dates"), py::arg("values"),
           py::arg("frequency") = "monthly", py::arg("target"))
      .def_property_readonly("variables", &cc::TimeSeriesDataset::variable_names)
      .def_property_readonly("dates", &iso_dates)
      .def_property_readonly("values", &cc::TimeSeriesDataset::values)
      .def_property_readonly("frequency", [](const cc::TimeSeriesDataset& d) { return std::string(cc::to_string(d.frequency())); })
      .def_property_readonly("target", &cc::TimeSeriesDataset::target_name)
      .def_property_readonly("shape", [](const cc::TimeSeriesDataset& d) { return py::make_tuple(d.rows(), d.cols()); })
      .def("missing_count", py::overload_cast<>(&cc::TimeSeriesDataset::missing_count, py::const_))
      .def("truncate_after", [](const cc::TimeSeriesDataset& d, const std::string& last) {
        return d.truncate_after(cc::Date::parse(last));
      })
      .def("summary", [](const cc::TimeSeriesDataset& d) { return to_python(cc::dataset_summary(d)); })
      .def("to_csv", [](const cc::TimeSeriesDataset& d) {
        std::ostringstream os;
        cc::write_csv(d, os);
        return os.str();
      })
      .def("__len__", &cc::TimeSeriesDataset::rows)
      .def("__repr__", [](const cc::TimeSeriesDataset& d) {
        return "<Dataset " + std::string(cc::to_string(d.frequency())) + " " + std::to_string(d.rows()) + "x" +
               std::to_string(d.cols()) + " target=" + d.target_name() + ">";
      });

  m.def("load_csv", [](const std::filesystem::path& path, const std::string& target, const std::string& freq) {
    return cc::load_csv(path, target, frequency(freq));
  }, py::arg("path"), py::arg("target"), py::arg("frequency") = "monthly");
  m.def("parse_csv", [](const std::string& text, const std::string& target, const std::string& freq) {
    std::istringstream in(text);
    return cc::parse_csv(in, target, frequency(freq));
  }, py::arg("text"), py::arg("target"), py::arg("frequency") = "monthly");
  m.def("save_csv", &cc::save_csv, py::arg("dataset"), py::arg("path"));
  m.def("impute", &cc::impute, py::arg("dataset"));
  m.def("aggregate_daily_to_monthly", &cc::aggregate_daily_to_monthly, py::arg("dataset"));

  m.def("f_cdf", &cc::stats::f_cdf, py::arg("x"), py::arg("d1"), py::arg("d2"));
  m.def("t_cdf", &cc::stats::t_cdf, py::arg("x"), py::arg("dof"));
  m.def("partial_correlation", [](const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& z) {
    const auto r = cc::stats::partial_correlation(x, y, z);
    return py::make_tuple(r.statistic, r.p_value);
  }, py::arg("x"), py::arg("y"), py::arg("conditioning"), "Returns (r, p).");
  m.def("benjamini_hochberg", [](const std::vector<double>& p, double alpha) {
    return cc::stats::benjamini_hochberg(p, alpha);
  }, py::arg("p_values"), py::arg("alpha"));
  m.def("bh_adjust", [](const std::vector<double>& p) { return cc::stats::bh_adjust(p); }, py::arg("p_values"));

  m.def("rmse", [](const std::vector<double>& p, const std::vector<double>& o) { return cc::rmse(p, o); },
        py::arg("pred"), py::arg("obs"));
  m.def("mae", [](const std::vector<double>& p, const std::vector<double>& o) { return cc::mae(p, o); },
        py::arg("pred"), py::arg("obs"));
  m.def("r2", [](const std::vector<double>& p, const std::vector<double>& o) { return cc::r2(p, o); },
        py::arg("pred"), py::arg("obs"));
  m.def("percentage_metrics", [](double rmse, double mae, const std::vector<double>& obs) {
    const auto p = cc::percentage_metrics(rmse, mae, obs);
    return py::make_tuple(p.rmse_pct, p.mae_pct);
  }, py::arg("rmse"), py::arg("mae"), py::arg("obs"), "Returns (rmse_pct, mae_pct).");

  m.def("mvgc", [](const cc::TimeSeriesDataset& d, const std::string& target, std::size_t max_lag, double alpha,
                   bool fdr, unsigned jobs) {
    return to_python(cc::to_json(cc::mvgc_test(d, target, {max_lag, alpha, fdr, jobs})));
  }, py::arg("dataset"), py::arg("target"), py::arg("max_lag") = 21, py::arg("alpha") = 0.05, py::arg("fdr") = true,
        py::arg("jobs") = 1);
  m.def("pcmci_plus", [](const cc::TimeSeriesDataset& d, std::size_t max_lag, double pc_alpha, bool fdr,
                         std::size_t max_samples, unsigned jobs) {
    cc::PcmciOptions o;
    o.max_lag = max_lag;
    o.pc_alpha = pc_alpha;
    o.fdr = fdr ? cc::FdrMethod::BenjaminiHochberg : cc::FdrMethod::None;
    o.max_samples = max_samples;
    o.jobs = jobs;
    return to_python(cc::to_json(cc::run_pcmci_plus(d, o)));
  }, py::arg("dataset"), py::arg("max_lag") = 21, py::arg("pc_alpha") = 0.05, py::arg("fdr") = true,
        py::arg("max_samples") = 0, py::arg("jobs") = 1);
  m.def("graph_to_dot", [](const py::dict& graph) { return cc::to_dot(cc::causal_graph_from_json(from_python(graph))); },
        py::arg("graph"));

  m.def("random_planted_graph", [](std::size_t n_vars, std::size_t n_links, std::uint64_t seed, std::size_t max_lag,
                                   double min_abs, double max_abs) {
    cc::synthetic::RandomGraphOptions o;
    o.max_lag = max_lag;
    o.min_abs_coefficient = min_abs;
    o.max_abs_coefficient = max_abs;
    return to_python(cc::synthetic::to_json(cc::synthetic::random_planted_graph(n_vars, n_links, seed, o)));
  }, py::arg("n_vars"), py::arg("n_links"), py::arg("seed"), py::arg("max_lag") = 5, py::arg("min_abs") = 0.3,
        py::arg("max_abs") = 0.6);
  m.def("generate_var", [](const py::dict& graph, std::size_t T, std::uint64_t seed, const std::string& freq,
                           const std::string& target, const std::string& start) {
    cc::synthetic::GenerateOptions o;
    o.frequency = frequency(freq);
    o.target = target;
    o.start = cc::Date::parse(start);
    return cc::synthetic::generate_var(cc::synthetic::planted_graph_from_json(from_python(graph)), T, seed, o);
  }, py::arg("graph"), py::arg("T"), py::arg("seed"), py::arg("frequency") = "monthly", py::arg("target") = "",
        py::arg("start") = "1979-01-01");

  m.def("parameter_count", [](std::size_t features, std::size_t gru, std::size_t lstm, std::size_t dense) {
    return cc::nn::NetworkShape{features, gru, lstm, dense}.parameter_count();
  }, py::arg("features"), py::arg("gru_hidden") = 64, py::arg("lstm_hidden") = 128, py::arg("dense") = 64);

  m.def("parse_config", [](const py::dict& config) { return to_python(cc::to_json(cc::parse_experiment_config(from_python(config)))); },
        py::arg("config"), "Validates a config and returns it with every default filled in.");
  m.def("run_experiment", [](const py::dict& config) {
    const auto c = cc::parse_experiment_config(from_python(config));
    cc::ExperimentResult result;
    {
      py::gil_scoped_release release;
      result = cc::run_experiment(c);
    }
    auto out = to_python(cc::to_json(result.report));
    out["csv"] = cc::report_csv(result.report);
    return out;
  }, py::arg("config"));

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "causalcast");
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = cc::run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the command line tool in-process; returns (exit_code, stdout, stderr).");
}
