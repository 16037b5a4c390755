#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <sstream>

#include "selfcf/errors.hpp"
#include "selfcf/eval.hpp"
#include "selfcf/runner.hpp"
#include "selfcf/selfcf.hpp"

namespace py = pybind11;
using namespace selfcf;

namespace {

nlohmann::json tree_from(const std::optional<std::filesystem::path>& config,
                         const std::vector<std::string>& overrides,
                         const std::optional<std::filesystem::path>& out) {
  auto tree = load_config_tree(config, overrides);
  if (out) tree["out"] = out->string();
  return tree;
}

// Reports cross into Python as JSON text; the wrapper decodes them.
std::string report_text(const MetricsReport& report) { return to_json(report).dump(); }

}  // namespace

PYBIND11_MODULE(_selfcf, m) {
  m.doc() = "Self-supervised collaborative filtering engine";
  m.attr("__version__") = kVersion;

  // Later registrations are tried first, so the subclass goes last.
  auto& base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("default_config", [] { return default_config_tree().dump(); });
  m.def(
      "resolve_config",
      [](std::optional<std::filesystem::path> config, std::vector<std::string> overrides) {
        const auto tree = load_config_tree(config, overrides);
        parse_run_config(tree);
        return tree.dump();
      },
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{});
  m.def("config_hash", [](const std::string& tree) { return config_hash(nlohmann::json::parse(tree)); });

  m.def(
      "run",
      [](const std::string& command, std::optional<std::filesystem::path> config,
         std::vector<std::string> overrides, std::optional<std::filesystem::path> out) {
        const auto tree = tree_from(config, overrides, out);
        std::ostringstream log;
        std::string result;
        {
          py::gil_scoped_release release;
          if (command == "prepare") {
            const auto ds = run_prepare(tree, log);
            result = nlohmann::json{{"users", ds.num_users()},
                                    {"items", ds.num_items()},
                                    {"interactions", ds.num_interactions()},
                                    {"sparsity", ds.sparsity()}}
                         .dump();
          } else if (command == "train") {
            const auto o = run_train(tree, log);
            auto j = to_json(o.report);
            j["best_epoch"] = o.result.best_epoch;
            j["epochs_run"] = o.result.epochs_run;
            j["parameter_count"] = o.parameter_count;
            result = j.dump();
          } else if (command == "evaluate") {
            result = report_text(run_evaluate(tree, log));
          } else if (command == "ablate") {
            nlohmann::ordered_json rows = nlohmann::ordered_json::array();
            for (const auto& r : run_ablate(tree, log)) {
              auto j = to_json(r.report);
              j["variant"] = r.variant;
              rows.push_back(j);
            }
            result = rows.dump();
          } else {
            throw ConfigError("unknown command '" + command + "'");
          }
        }
        return py::make_tuple(result, log.str());
      },
      py::arg("command"), py::arg("config") = py::none(),
      py::arg("overrides") = std::vector<std::string>{}, py::arg("out") = py::none());

  m.def(
      "sweep",
      [](const std::string& axis, const std::string& values, std::optional<std::filesystem::path> config,
         std::vector<std::string> overrides, std::optional<std::filesystem::path> out) {
        const auto tree = tree_from(config, overrides, out);
        std::ostringstream log;
        std::string csv;
        {
          py::gil_scoped_release release;
          csv = format_sweep_csv(run_sweep(tree, axis, parse_sweep_values(values), log));
        }
        return py::make_tuple(csv, log.str());
      },
      py::arg("axis"), py::arg("values"), py::arg("config") = py::none(),
      py::arg("overrides") = std::vector<std::string>{}, py::arg("out") = py::none());

  m.def(
      "recall_at_k",
      [](std::vector<std::size_t> ranked, std::vector<std::size_t> truth, std::size_t k) {
        std::sort(truth.begin(), truth.end());
        return recall_at_k(ranked, truth, k);
      },
      py::arg("ranked"), py::arg("truth"), py::arg("k"));
  m.def(
      "ndcg_at_k",
      [](std::vector<std::size_t> ranked, std::vector<std::size_t> truth, std::size_t k) {
        std::sort(truth.begin(), truth.end());
        return ndcg_at_k(ranked, truth, k);
      },
      py::arg("ranked"), py::arg("truth"), py::arg("k"));
  m.def(
      "top_k", [](std::vector<double> scores, std::size_t k) { return top_k(scores, k); },
      py::arg("scores"), py::arg("k"));
  m.def("count_parameters", &count_parameters, py::arg("num_users"), py::arg("num_items"),
        py::arg("dim") = 64, py::arg("predictor_layers") = 1);
}
