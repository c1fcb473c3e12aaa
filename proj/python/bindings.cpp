// SPDX-License-Identifier: Apache-2.0
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "longimam/errors.hpp"
#include "longimam/evaluation/metrics.hpp"
#include "longimam/model/scenario.hpp"
#include "longimam/numerics/optim.hpp"
#include "longimam/pipeline/config.hpp"
#include "longimam/pipeline/pipeline.hpp"

namespace py = pybind11;
using namespace longimam;

namespace {

pipeline::Logger wrap_logger(const py::object& log) {
  if (log.is_none()) return {};
  return [log](const std::string& msg) {
    py::gil_scoped_acquire gil;
    log(msg);
  };
}

template <typename Fn>
void run_step(Fn fn, const pipeline::RunConfig& config, const py::object& log) {
  const pipeline::Logger logger = wrap_logger(log);
  py::gil_scoped_release release;
  fn(config, logger);
}

}  // namespace

PYBIND11_MODULE(_longimam, m) {
  m.doc() = "Longitudinal mammography risk model: metrics and pipeline steps";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "auc", [](const std::vector<double>& s, const std::vector<int>& y) { return evaluation::auc(s, y); },
      py::arg("scores"), py::arg("labels"), "Rank AUC with ties counted as one half.");
  m.def(
      "exact_mean", [](const std::vector<double>& v) { return evaluation::exact_mean(v); }, py::arg("values"),
      "Correctly rounded arithmetic mean.");
  m.def(
      "bootstrap_ci",
      [](const std::vector<double>& s, const std::vector<int>& y, std::size_t replicates, double level,
         std::uint64_t seed) {
        const auto ci = evaluation::bootstrap_ci(s, y, {.replicates = replicates, .level = level, .seed = seed});
        return py::make_tuple(ci.lo, ci.hi);
      },
      py::arg("scores"), py::arg("labels"), py::arg("replicates") = 1000, py::arg("level") = 0.95,
      py::arg("seed") = 0);
  m.def("cosine_lr", &numerics::cosine_lr, py::arg("t"), py::arg("total"), py::arg("eta_max"), py::arg("eta_min"));

  m.def("scenarios", [] {
    std::vector<std::string> out;
    for (model::ScenarioId id : model::kAllScenarios) out.emplace_back(model::to_string(id));
    return out;
  });
  m.def(
      "sequence_length", [](const std::string& s) { return model::sequence_length(model::parse_scenario(s)); },
      py::arg("scenario"));

  py::class_<pipeline::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_json", &pipeline::RunConfig::from_json, py::arg("text"))
      .def_static("load", &pipeline::load_config, py::arg("path"))
      .def("to_json", &pipeline::RunConfig::to_json)
      .def_readwrite("seed", &pipeline::RunConfig::seed)
      .def_property(
          "output_dir", [](const pipeline::RunConfig& c) { return c.paths.output_dir; },
          [](pipeline::RunConfig& c, const std::string& d) { c.paths.output_dir = d; });

  m.def(
      "synth", [](const pipeline::RunConfig& c, py::object log) { run_step(pipeline::cmd_synth, c, log); },
      py::arg("config"), py::arg("log") = py::none());
  m.def(
      "ingest", [](const pipeline::RunConfig& c, py::object log) { run_step(pipeline::cmd_ingest, c, log); },
      py::arg("config"), py::arg("log") = py::none());
  m.def(
      "split", [](const pipeline::RunConfig& c, py::object log) { run_step(pipeline::cmd_split, c, log); },
      py::arg("config"), py::arg("log") = py::none());
  m.def(
      "train1", [](const pipeline::RunConfig& c, py::object log) { run_step(pipeline::cmd_train1, c, log); },
      py::arg("config"), py::arg("log") = py::none());
  m.def(
      "train2", [](const pipeline::RunConfig& c, py::object log) { run_step(pipeline::cmd_train2, c, log); },
      py::arg("config"), py::arg("log") = py::none());
  m.def(
      "evaluate", [](const pipeline::RunConfig& c, py::object log) { run_step(pipeline::cmd_eval, c, log); },
      py::arg("config"), py::arg("log") = py::none());
  m.def(
      "report", [](const pipeline::RunConfig& c, py::object log) { run_step(pipeline::cmd_report, c, log); },
      py::arg("config"), py::arg("log") = py::none());
}
