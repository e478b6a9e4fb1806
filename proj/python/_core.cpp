#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "factr/autodiff/tensor.hpp"
#include "factr/cli/app.hpp"
#include "factr/cli/manifest.hpp"
#include "factr/common/errors.hpp"
#include "factr/data/synth.hpp"
#include "factr/data/windows.hpp"
#include "factr/eval/bench.hpp"
#include "factr/model/checkpoint.hpp"
#include "factr/model/lowrank.hpp"
#include "factr/model/model.hpp"

namespace py = pybind11;
using namespace factr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;
using Model = model::FaCTRModel<double>;

ad::Shape shape_of(const py::array& a) {
  ad::Shape s(static_cast<std::size_t>(a.ndim()));
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<std::size_t>(a.shape(static_cast<py::ssize_t>(i)));
  return s;
}

ad::Tensor<double> to_tensor(const Array& a) {
  const double* p = a.data();
  return ad::Tensor<double>(shape_of(a), std::vector<double>(p, p + a.size()));
}

ad::IndexTensor to_index(const IndexArray& a) {
  ad::IndexTensor t(shape_of(a));
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::array_t<double> to_array(const ad::Tensor<double>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

nlohmann::json to_json(const py::dict& d) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(d).cast<std::string>());
}

py::dict to_dict(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump()).cast<py::dict>();
}

model::ForwardOutput<double> run_forward(Model& m, const Array& x, const std::optional<IndexArray>& dyn, bool dump) {
  auto xt = to_tensor(x);
  std::optional<ad::IndexTensor> dt;
  if (dyn) dt = to_index(*dyn);
  ad::NoGradGuard<double> guard;
  return m.forward(xt, dt ? &*dt : nullptr, {false, dump});
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Bindings for the factr forecasting engine";

  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(mod, "DataError", PyExc_RuntimeError);
  py::register_exception<IntegrityError>(mod, "IntegrityError", PyExc_RuntimeError);
  py::register_exception<ad::DimensionError>(mod, "DimensionError", PyExc_ValueError);

  py::class_<model::ModelConfig>(mod, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("lookback", &model::ModelConfig::lookback)
      .def_readwrite("patch", &model::ModelConfig::patch)
      .def_readwrite("stride", &model::ModelConfig::stride)
      .def_readwrite("d_model", &model::ModelConfig::d_model)
      .def_readwrite("r_fm", &model::ModelConfig::r_fm)
      .def_readwrite("r_sp", &model::ModelConfig::r_sp)
      .def_readwrite("channels", &model::ModelConfig::channels)
      .def_readwrite("horizon", &model::ModelConfig::horizon)
      .def_readwrite("dynamic_cardinalities", &model::ModelConfig::dynamic_cardinalities)
      .def_readwrite("static_cardinalities", &model::ModelConfig::static_cardinalities)
      .def_readwrite("static_continuous", &model::ModelConfig::static_continuous)
      .def_readwrite("dropout", &model::ModelConfig::dropout)
      .def_readwrite("truncate_front", &model::ModelConfig::truncate_front)
      .def_readwrite("seed", &model::ModelConfig::seed)
      .def_property(
          "variant", [](const model::ModelConfig& c) { return model::variant_name(c.variant); },
          [](model::ModelConfig& c, const std::string& v) { c.variant = model::parse_variant(v); })
      .def_property_readonly("num_patches", &model::ModelConfig::num_patches)
      .def("validate", &model::ModelConfig::validate)
      .def("to_dict", [](const model::ModelConfig& c) { return to_dict(c.to_json()); })
      .def_static("from_dict", [](const py::dict& d) { return model::ModelConfig::from_json(to_json(d)); })
      .def("__repr__", [](const model::ModelConfig& c) { return "ModelConfig(" + c.to_json().dump() + ")"; });

  mod.def(
      "count_params",
      [](const model::ModelConfig& c) {
        auto pc = model::count_params(c);
        return py::make_tuple(pc.total, pc.breakdown);
      },
      py::arg("config"), "Closed-form parameter count: (total, [(name, count), ...]).");

  py::class_<Model>(mod, "Model")
      .def(py::init<model::ModelConfig>(), py::arg("config"))
      .def_static(
          "from_checkpoint",
          [](const std::string& path) { return model::model_from_checkpoint<double>(model::read_checkpoint(path)); },
          py::arg("path"))
      .def("save_checkpoint",
           [](const Model& m, const std::string& path) { model::write_checkpoint(model::make_checkpoint(m), path); },
           py::arg("path"))
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("num_parameters", [](const Model& m) { return m.params().total_numel(); })
      .def(
          "parameters",
          [](const Model& m) {
            py::dict out;
            for (const auto& [name, t] : m.params().entries()) out[py::str(name)] = to_array(t);
            return out;
          },
          "Copies of every tensor, in enumeration order.")
      .def(
          "set_parameter",
          [](Model& m, const std::string& name, const Array& value) {
            auto& t = m.params().at(name);
            if (shape_of(value) != t.shape())
              throw ad::DimensionError("set_parameter: " + name + " has shape " + ad::shape_str(t.shape()));
            std::copy(value.data(), value.data() + value.size(), t.data().begin());
          },
          py::arg("name"), py::arg("value"))
      .def(
          "forecast",
          [](Model& m, const Array& x, const std::optional<IndexArray>& dynamic) {
            return to_array(run_forward(m, x, dynamic, false).forecast);
          },
          py::arg("x"), py::arg("dynamic") = py::none(), "Inference forecast [B, C, T] for inputs [B, C, L].")
      .def(
          "interpret",
          [](Model& m, const Array& x, const std::optional<IndexArray>& dynamic) {
            auto out = run_forward(m, x, dynamic, true);
            py::dict d;
            d["forecast"] = to_array(out.forecast);
            d["temporal"] = to_array(out.dump->temporal);
            if (out.dump->fm_scores) d["fm_scores"] = to_array(*out.dump->fm_scores);
            if (out.dump->spatial) d["spatial"] = to_array(*out.dump->spatial);
            if (out.dump->gate) d["gate"] = to_array(*out.dump->gate);
            return d;
          },
          py::arg("x"), py::arg("dynamic") = py::none(),
          "Forecast plus attention maps: temporal [B, C, N, N], spatial [B, C, C, N].");

  mod.def(
      "synth_retail",
      [](std::size_t days, std::uint64_t seed) {
        auto ds = data::synth_retail_generate(days, seed);
        py::dict d;
        d["values"] = to_array(ds.values);
        d["channels"] = ds.channel_names;
        d["timestamps"] = *ds.timestamps;
        return d;
      },
      py::arg("days"), py::arg("seed") = 0, "Eight-channel daily retail series.");

  mod.def(
      "calendar_covariates",
      [](const std::vector<std::int64_t>& timestamps) {
        auto cal = data::calendar_covariates(timestamps, 0, timestamps.size());
        py::array_t<std::int32_t> out({static_cast<py::ssize_t>(timestamps.size()),
                                       static_cast<py::ssize_t>(data::kCalendarFeatures)});
        std::copy(cal->data.begin(), cal->data.end(), out.mutable_data());
        return out;
      },
      py::arg("timestamps"), "[n, 4] hour, weekday, day-of-month and month codes.");

  mod.def(
      "low_rank_optimality_check",
      [](const Array& s, std::size_t r) {
        if (s.ndim() != 2) throw ad::DimensionError("expected a matrix");
        Eigen::MatrixXd m(s.shape(0), s.shape(1));
        for (py::ssize_t i = 0; i < s.shape(0); ++i)
          for (py::ssize_t j = 0; j < s.shape(1); ++j) m(i, j) = s.at(i, j);
        return model::low_rank_optimality_check(m, r);
      },
      py::arg("s"), py::arg("r"), "Squared Frobenius residual of the best rank-r approximation.");

  mod.def("loglog_slope", &eval::loglog_slope, py::arg("x"), py::arg("y"));
  mod.def("git_blob_sha1", [](const py::bytes& b) { return cli::git_blob_sha1(std::string(b)); }, py::arg("data"));

  mod.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> all = {"factr"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : all) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a factr subcommand in process: (exit code, stdout, stderr).");
}
