#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "arsivae/cli.hpp"
#include "arsivae/errors.hpp"
#include "arsivae/metrics.hpp"
#include "arsivae/objectives.hpp"
#include "arsivae/synth_data.hpp"
#include "arsivae/trainer.hpp"

namespace py = pybind11;
using namespace arsivae;

namespace {

using Doubles = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Floats = py::array_t<float, py::array::c_style | py::array::forcecast>;

torch::Tensor as_tensor(const Doubles& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kDouble).clone();
}

std::vector<double> as_vector(const Doubles& a) { return {a.data(), a.data() + a.size()}; }

Eigen::MatrixXd as_matrix(const Doubles& a, const char* what) {
  if (a.ndim() != 2) throw ContractError(std::string(what) + " must be 2-D");
  Eigen::MatrixXd m(a.shape(0), a.shape(1));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = a.at(i, j);
  }
  return m;
}

CodesTable make_table(const Doubles& codes, const Doubles& attributes) {
  CodesTable t;
  t.codes = as_matrix(codes, "codes");
  t.attributes = as_matrix(attributes, "attributes");
  for (int j = 0; j < t.attributes.cols(); ++j) {
    t.attribute_names.push_back(j < kNumAttributes ? attribute_names()[static_cast<size_t>(j)]
                                                   : "attr_" + std::to_string(j));
  }
  return t;
}

py::array_t<int64_t> index_array(const std::vector<int64_t>& v) { return py::array_t<int64_t>(v.size(), v.data()); }

py::dict dataset_dict(const DatasetArchive& ds) {
  py::array_t<float> images({ds.n, int64_t{kNumPhases}, int64_t{ds.canvas.height}, int64_t{ds.canvas.width}});
  std::copy(ds.images.begin(), ds.images.end(), images.mutable_data());
  py::array_t<float> attrs({ds.n, int64_t{kNumAttributes}});
  std::copy(ds.attributes.begin(), ds.attributes.end(), attrs.mutable_data());
  py::dict d;
  d["images"] = images;
  d["attributes"] = attrs;
  d["names"] = ds.names;
  d["train"] = index_array(ds.train);
  d["val"] = index_array(ds.val);
  d["test"] = index_array(ds.test);
  d["seed"] = ds.seed;
  d["content_hash"] = dataset_content_hash(ds);
  return d;
}

}  // namespace

PYBIND11_MODULE(_arsivae, m) {
  m.doc() = "Attribute-regularized soft introspective VAE toolkit";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<InvalidConfig>(m, "InvalidConfig", PyExc_ValueError);
  py::register_exception<UndefinedMetric>(m, "UndefinedMetric", PyExc_ArithmeticError);
  py::register_exception<CorruptArchive>(m, "CorruptArchive", PyExc_IOError);
  py::register_exception<TrainingDivergence>(m, "TrainingDivergence", PyExc_RuntimeError);

  m.def("attribute_names", [] { return std::vector<std::string>(attribute_names().begin(), attribute_names().end()); });

  m.def(
      "generate_dataset",
      [](int64_t n, uint64_t seed, int size) { return dataset_dict(generate_dataset(n, seed, Canvas{size, size})); },
      py::arg("n"), py::arg("seed") = 0, py::arg("size") = 64);
  m.def(
      "load_dataset", [](const std::filesystem::path& dir) { return dataset_dict(load_dataset(dir)); }, py::arg("dir"));

  m.def(
      "attribute_reg_loss",
      [](const Doubles& z, const Doubles& a, double delta) {
        return attribute_reg_loss(as_tensor(z), as_tensor(a), delta).item<double>();
      },
      py::arg("z"), py::arg("a"), py::arg("delta") = 1.0);
  m.def(
      "gaussian_kl",
      [](const Doubles& mu, const Doubles& logvar) {
        auto mt = as_tensor(mu), lt = as_tensor(logvar);
        if (mt.dim() == 1) {
          mt = mt.unsqueeze(0);
          lt = lt.unsqueeze(0);
        }
        return gaussian_kl(mt, lt).item<double>();
      },
      py::arg("mu"), py::arg("logvar"));

  m.def(
      "ssim",
      [](const Floats& x, const Floats& y) {
        if (x.ndim() != 2 || y.ndim() != 2) throw ContractError("ssim expects 2-D images");
        if (x.shape(0) != y.shape(0) || x.shape(1) != y.shape(1)) throw ContractError("ssim shape mismatch");
        return ssim({x.data(), static_cast<size_t>(x.size())}, {y.data(), static_cast<size_t>(y.size())},
                    static_cast<int>(x.shape(0)), static_cast<int>(x.shape(1)));
      },
      py::arg("x"), py::arg("y"));
  m.def(
      "spearman", [](const Doubles& u, const Doubles& v) { return spearman(as_vector(u), as_vector(v)); },
      py::arg("u"), py::arg("v"));
  m.def(
      "latent_metrics",
      [](const Doubles& codes, const Doubles& attributes) {
        const auto t = make_table(codes, attributes);
        py::dict d;
        d["scc"] = scc_metric(t).mean;
        d["interpretability"] = interpretability_score(t).mean;
        d["sap"] = sap_metric(t).mean;
        try {
          d["modularity"] = modularity_metric(t).mean;
        } catch (const UndefinedMetric&) {
          d["modularity"] = py::none();
        }
        return d;
      },
      py::arg("codes"), py::arg("attributes"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "arsivae");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        py::gil_scoped_release release;
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"));
}
