#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "biascorr/error.hpp"
#include "biascorr/experiment.hpp"
#include "biascorr/io.hpp"
#include "biascorr/metrics.hpp"
#include "biascorr/oracle.hpp"
#include "biascorr/sampling.hpp"
#include "biascorr/trainer.hpp"

namespace py = pybind11;
using namespace biascorr;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("features must be a 2-d array");
  Matrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

std::vector<Label> to_labels(const LabelArray& a) {
  if (a.ndim() != 1) throw ShapeError("labels must be a 1-d array");
  std::vector<Label> out(a.size());
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] < 0) throw DomainError("labels must be nonnegative");
    out[i] = static_cast<Label>(a.data()[i]);
  }
  return out;
}

py::tuple dataset_arrays(const Dataset& d) {
  Array x({d.features.rows, d.features.cols});
  std::copy(d.features.data.begin(), d.features.data.end(), x.mutable_data());
  LabelArray y(static_cast<py::ssize_t>(d.labels.size()));
  for (std::size_t i = 0; i < d.labels.size(); ++i) y.mutable_data()[i] = static_cast<std::int64_t>(d.labels[i]);
  return py::make_tuple(x, y);
}

std::vector<double> flat_params(const ParamVector& p) { return {p.values().begin(), p.values().end()}; }

ParamVector params_from(const ScorerSpec& spec, const std::vector<double>& values) {
  ParamVector p = make_layout(spec);
  if (values.size() != p.size()) {
    throw ShapeError("expected " + std::to_string(p.size()) + " parameters, got " + std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), p.values().begin());
  return p;
}

std::optional<double> opt(const py::object& o) {
  if (o.is_none()) return std::nullopt;
  return o.cast<double>();
}

py::tuple synthesize(const std::string& scenario, std::size_t n, std::optional<std::vector<double>> ptilde,
                     std::optional<double> prevalence, std::uint64_t seed) {
  const PopulationModel pop = population_for(scenario, prevalence.value_or(0.3));
  const std::vector<double> p = ptilde.value_or(pop.true_marginal);
  const Dataset d = sample_biased_trainset(pop, p, n, seed);
  return dataset_arrays(d);
}

std::string run(const std::string& config_json, const py::object& prevalence, std::uint64_t data_stream) {
  const ExperimentConfig c = parse_experiment_config(json::parse(config_json));
  const PreparedRun prepared = prepare_run(c, opt(prevalence), data_stream);
  RunOutcome out;
  {
    py::gil_scoped_release release;
    out = run_prepared(prepared, c.eval.histogram_bins);
  }
  json trace = json::array();
  for (const auto& r : out.result.trace.records) trace.push_back(to_json(r));
  return json{{"params", flat_params(out.result.params)},
              {"report", to_json(out.report)},
              {"calibration_mae", std::isnan(out.calibration_mae) ? json(nullptr) : json(out.calibration_mae)},
              {"tracked_marginal", out.result.tracked_marginal},
              {"trace", trace},
              {"config", to_json(c)}}
      .dump();
}

Array predict_probs(const std::string& config_json, const py::object& prevalence, const std::vector<double>& params,
                    const Array& features) {
  const ExperimentConfig c = parse_experiment_config(json::parse(config_json));
  const PreparedRun prepared = prepare_run(c, opt(prevalence), 0);
  const auto& t = prepared.train;
  const auto probs = predict(params_from(t.scorer, params), t.scorer, t.likelihood, to_matrix(features));
  Array out({probs.size(), t.likelihood.num_classes});
  for (std::size_t i = 0; i < probs.size(); ++i) std::copy(probs[i].begin(), probs[i].end(), out.mutable_data() + i * t.likelihood.num_classes);
  return out;
}

std::string binary_report(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn, double prevalence) {
  return to_json(report(ConfusionCounts::binary(tp, fp, tn, fn), {}, {}, prevalence)).dump();
}

py::tuple roc(const Array& scores, const LabelArray& labels) {
  if (scores.ndim() != 1) throw ShapeError("scores must be a 1-d array");
  const auto truths = to_labels(labels);
  const RocResult r = roc_auc(std::span<const double>(scores.data(), scores.size()), truths);
  Array curve({r.curve.size(), std::size_t{3}});
  for (std::size_t i = 0; i < r.curve.size(); ++i) {
    curve.mutable_data()[3 * i] = r.curve[i].threshold;
    curve.mutable_data()[3 * i + 1] = r.curve[i].tpr;
    curve.mutable_data()[3 * i + 2] = r.curve[i].fpr;
  }
  return py::make_tuple(curve, r.auc);
}

py::dict oracle_check(std::size_t instances, double tolerance, std::uint64_t seed) {
  const OracleSuiteResult r = run_oracle_suite(instances, tolerance, seed);
  py::list diffs;
  for (const auto& i : r.instances) diffs.append(i.max_abs_diff);
  py::dict d;
  d["passed"] = r.passed;
  d["instances"] = r.instances.size();
  d["max_abs_diff"] = diffs;
  d["all_passed"] = r.all_passed();
  return d;
}

}  // namespace

PYBIND11_MODULE(_biascorr, m) {
  m.doc() = "Bias-corrected training under label-based sampling bias";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const UsageError& e) {
      py::set_error(config_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    } catch (const nlohmann::json::exception& e) {
      py::set_error(config_error, e.what());
    }
  });

  m.def("synthesize", &synthesize, py::arg("scenario"), py::arg("n"), py::arg("ptilde") = py::none(),
        py::arg("prevalence") = py::none(), py::arg("seed") = 1);
  m.def("run", &run, py::arg("config_json"), py::arg("prevalence") = py::none(), py::arg("data_stream") = 0);
  m.def("predict", &predict_probs, py::arg("config_json"), py::arg("prevalence"), py::arg("params"),
        py::arg("features"));
  m.def("binary_report", &binary_report, py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"),
        py::arg("prevalence"));
  m.def("roc_auc", &roc, py::arg("scores"), py::arg("labels"));
  m.def("oracle_check", &oracle_check, py::arg("instances") = 100, py::arg("tolerance") = 1e-10,
        py::arg("seed") = 0);
  m.def("scenarios", &scenario_names);
}
