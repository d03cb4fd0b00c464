#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dquag/bench.hpp"
#include "dquag/error.hpp"

namespace py = pybind11;
using namespace dquag;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(py::ssize_t(v.size()), v.data()); }

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({py::ssize_t(m.rows()), py::ssize_t(m.cols())});
  std::copy(m.data(), m.data() + m.size(), out.mutable_data());
  return out;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json py_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

RawTable read_table(const std::string& csv, const Schema& schema) { return parse_csv(csv, schema); }

ModelBundle train_bundle(const std::string& data, const std::string& schema_path, const std::optional<std::string>& graph,
                         const py::dict& params) {
  auto schema = load_schema(schema_path);
  auto table = read_table(data, schema);
  auto codec = fit_codec(table);
  auto x = encode(table, codec);
  nlohmann::json hp_json = Hyperparams{};
  const auto overrides = py_to_json(params);
  for (const auto& [k, v] : overrides.items()) {
    if (!hp_json.contains(k)) throw InvalidArgument("unknown hyperparameter '" + k + "'");
    hp_json[k] = v;
  }
  auto hp = hp_json.get<Hyperparams>();
  FeatureGraph g = graph ? expand_graph(load_graph(*graph), codec) : build_statistical_graph(codec, x);
  return train(codec, x, g, hp);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Graph-based tabular data validation and repair";

  py::register_exception<Error>(m, "DquagError", PyExc_RuntimeError);

  py::class_<ModelBundle>(m, "Bundle")
      .def_static("load", &load_bundle, py::arg("path"))
      .def("save", [](const ModelBundle& b, const std::string& path) { save_bundle(b, path); }, py::arg("path"))
      .def_property_readonly("threshold", [](const ModelBundle& b) { return b.profile.threshold; })
      .def_property_readonly("feature_names", [](const ModelBundle& b) { return b.codec.feature_names(); })
      .def_property_readonly("hyperparams", [](const ModelBundle& b) { return json_to_py(nlohmann::json(b.hyperparams)); })
      .def("to_json", [](const ModelBundle& b) { return serialize_bundle(b); });

  m.def("train", &train_bundle, py::arg("data"), py::arg("schema"), py::arg("graph") = py::none(),
        py::arg("hyperparams") = py::dict(),
        "Train on a clean CSV. `graph` is a column-level graph JSON; omitted means the statistical builder.");

  m.def(
      "score",
      [](const ModelBundle& b, const std::string& data) {
        auto r = score(read_table(data, b.schema()), b);
        py::dict out;
        out["instance_errors"] = to_array(r.instance_errors);
        out["feature_errors"] = to_array(r.feature_errors);
        out["feature_names"] = r.feature_names;
        return out;
      },
      py::arg("bundle"), py::arg("data"));

  m.def(
      "validate",
      [](const ModelBundle& b, const std::string& data) {
        return json_to_py(verdict_to_json(verdict(score(read_table(data, b.schema()), b), b)));
      },
      py::arg("bundle"), py::arg("data"));

  m.def(
      "repair",
      [](const ModelBundle& b, const std::string& data) {
        auto table = read_table(data, b.schema());
        auto report = score(table, b);
        auto fixed = repair(table, report, verdict(report, b), b);
        return py::make_tuple(to_csv_text(fixed.table), change_log_csv(fixed.changes));
      },
      py::arg("bundle"), py::arg("data"), "Returns (repaired CSV text, change log CSV text).");

  m.def(
      "inject",
      [](const std::string& data, const std::string& schema_path, const py::dict& plan) {
        auto schema = load_schema(schema_path);
        auto p = py_to_json(plan).get<InjectionPlan>();
        auto inj = make_dirty(read_table(data, schema), p);
        return py::make_tuple(to_csv_text(inj.table), mask_csv(inj.mask, schema));
      },
      py::arg("data"), py::arg("schema"), py::arg("plan"), "Returns (dirty CSV text, mask CSV text).");

  m.def(
      "synth",
      [](const std::optional<py::dict>& spec, std::optional<std::size_t> rows, std::uint64_t seed) {
        SyntheticSpec s = spec ? py_to_json(*spec).get<SyntheticSpec>() : desk_scale_spec(seed);
        if (rows) s.rows = *rows;
        auto t = gen_synthetic(s);
        return py::make_tuple(to_csv_text(t), json_to_py(nlohmann::json(s.schema())),
                              json_to_py(nlohmann::json(dependency_graph(s))));
      },
      py::arg("spec") = py::none(), py::arg("rows") = py::none(), py::arg("seed") = 42,
      "Returns (CSV text, schema dict, dependency graph dict).");

  m.def(
      "calibrate_threshold",
      [](const std::vector<double>& errors, double percentile) { return calibrate_threshold(errors, percentile); },
      py::arg("errors"), py::arg("percentile") = 0.95);
  m.def(
      "sample_weights", [](const std::vector<double>& errors, double floor) { return to_array(sample_weights(errors, floor)); },
      py::arg("errors"), py::arg("floor") = 1e-6);
  m.def(
      "flag_features", [](const std::vector<double>& errors) { return flag_features(errors); }, py::arg("errors"));
}
