// Copyright 2026 The imvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Python bindings over the core: configuration-driven training, checkpoint
// I/O, encoding and decoding with frozen models, and the evaluation metrics.
// Arrays cross the boundary as float64 numpy matrices.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <string>

#include "imvae/checkpoint.hpp"
#include "imvae/data.hpp"
#include "imvae/errors.hpp"
#include "imvae/metrics.hpp"
#include "imvae/models.hpp"
#include "imvae/objectives.hpp"
#include "imvae/train.hpp"

namespace py = pybind11;
using namespace imvae;

namespace {

using Matrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseArray to_dense(const Matrix& a) {
  if (a.ndim() == 1) {
    DenseArray out(static_cast<std::size_t>(a.shape(0)), 1);
    std::memcpy(out.data().data(), a.data(), out.size() * sizeof(double));
    return out;
  }
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array, got " + std::to_string(a.ndim()) + "-D");
  DenseArray out(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  if (out.size() != 0) std::memcpy(out.data().data(), a.data(), out.size() * sizeof(double));
  return out;
}

Matrix to_numpy(const DenseArray& a) {
  Matrix out({static_cast<py::ssize_t>(a.rows()), static_cast<py::ssize_t>(a.cols())});
  if (a.size() != 0) std::memcpy(out.mutable_data(), a.data().data(), a.size() * sizeof(double));
  return out;
}

TrainConfig config_from_dict(const py::dict& d) {
  TrainConfig c;
  for (const auto& [k, v] : d) c.set(py::str(k), py::str(v));
  return c;
}

py::dict record_to_dict(const MetricsRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["mi"] = r.mi;
  d["kl"] = r.kl;
  d["au"] = r.active_units;
  d["elbo"] = r.elbo;
  d["probe_acc"] = r.probe_accuracy;
  d["mi_converged"] = r.mi_converged;
  return d;
}

Dataset dataset_from_arrays(const Matrix& x, const std::optional<std::vector<int>>& labels) {
  Dataset d;
  d.name = "numpy";
  d.examples = to_dense(x);
  if (labels) {
    if (labels->size() != d.size()) throw DimensionError("labels and examples differ in length");
    d.labels = *labels;
    int top = -1;
    for (int l : *labels) top = std::max(top, l);
    d.classes = static_cast<std::size_t>(top + 1);
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_imvae, m) {
  m.doc() = "Variational autoencoders with a mutual-information regulariser";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("version", &version_string);

  py::class_<ModelShape>(m, "ModelShape")
      .def(py::init([](std::size_t input_dim, std::size_t z_dim, std::size_t hidden,
                       std::size_t critic_hidden) {
             return ModelShape{input_dim, z_dim, hidden, critic_hidden};
           }),
           py::arg("input_dim") = 784, py::arg("z_dim") = 8, py::arg("hidden") = 256,
           py::arg("critic_hidden") = 400)
      .def_readwrite("input_dim", &ModelShape::input_dim)
      .def_readwrite("z_dim", &ModelShape::z_dim)
      .def_readwrite("hidden", &ModelShape::hidden)
      .def_readwrite("critic_hidden", &ModelShape::critic_hidden)
      .def("__repr__", [](const ModelShape& s) {
        return "ModelShape(input_dim=" + std::to_string(s.input_dim) + ", z_dim=" +
               std::to_string(s.z_dim) + ", hidden=" + std::to_string(s.hidden) +
               ", critic_hidden=" + std::to_string(s.critic_hidden) + ")";
      });

  py::class_<Model>(m, "Model")
      .def_readonly("shape", &Model::shape)
      .def(
          "parameters",
          [](const Model& model) {
            py::dict out;
            for (const diff::Parameter* p : model.all_parameters()) out[py::str(p->name)] = to_numpy(p->value);
            return out;
          },
          "All weight and bias arrays keyed by name, in checkpoint order.")
      .def(
          "encode",
          [](const Model& model, const Matrix& x) {
            const PosteriorTable t = posterior_table(model.encoder, to_dense(x));
            return py::make_tuple(to_numpy(t.mean), to_numpy(t.log_var));
          },
          py::arg("x"), "Posterior (mean, log_var) for each row of x.")
      .def(
          "decode",
          [](const Model& model, const Matrix& z) {
            diff::Graph g;
            return to_numpy(decode(g, model.decoder, g.constant(to_dense(z))).value());
          },
          py::arg("z"), "Bernoulli means for each latent row.")
      .def(
          "critic",
          [](const Model& model, const Matrix& x, const Matrix& z) {
            diff::Graph g;
            return to_numpy(
                critic_score(g, model.critic, g.constant(to_dense(x)), g.constant(to_dense(z))).value());
          },
          py::arg("x"), py::arg("z"))
      .def(
          "elbo",
          [](const Model& model, const Matrix& x, std::size_t samples, std::uint64_t seed) {
            return log_likelihood(model, to_dense(x), samples, seed).mean;
          },
          py::arg("x"), py::arg("samples") = 1, py::arg("seed") = 0,
          "Mean single-sample ELBO, or the importance-weighted bound for samples > 1.");

  m.def("init_params", &init_params, py::arg("shape"), py::arg("seed") = 0);
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("model"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def(
      "encode_checkpoint",
      [](const Model& model) {
        const auto bytes = encode_checkpoint(model);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("model"));

  m.def(
      "train",
      [](const py::dict& config, const std::optional<Matrix>& x,
         const std::optional<std::vector<int>>& labels) {
        const TrainConfig c = config_from_dict(config);
        std::optional<Split> split;
        if (x) split = prepare_data(c, dataset_from_arrays(*x, labels));
        RunResult r;
        {
          py::gil_scoped_release release;
          r = split ? train(c, *split) : train(c);
        }
        py::list metrics;
        for (const auto& rec : r.metrics) metrics.append(record_to_dict(rec));
        py::list log;
        for (const auto& s : r.log) {
          py::dict row;
          row["step"] = s.step;
          row["vae_loss"] = s.vae_loss;
          row["recon_ll"] = s.recon_ll;
          row["kl"] = s.kl;
          row["mi_bound"] = s.mi_bound;
          row["mmd2"] = s.mmd2;
          log.append(row);
        }
        py::dict out;
        out["model"] = py::cast(std::move(r.model));
        out["metrics"] = metrics;
        out["log"] = log;
        out["status"] = r.manifest.status;
        out["run_dir"] = r.manifest.run_dir.string();
        return out;
      },
      py::arg("config"), py::arg("x") = py::none(), py::arg("labels") = py::none(),
      "Train from a dict of config keys. With x (and optional labels) the arrays\n"
      "replace the configured data files.");

  m.def(
      "config_text",
      [](const py::dict& config) {
        const TrainConfig c = config_from_dict(config);
        c.validate();
        return c.to_text();
      },
      py::arg("config"), "Validated key=value text for a config dict.");

  m.def(
      "load_idx",
      [](const std::string& images, const std::optional<std::string>& labels) {
        std::optional<std::filesystem::path> lp;
        if (labels) lp = *labels;
        const Dataset d = load_idx(images, lp);
        return py::make_tuple(to_numpy(d.examples),
                              d.labels ? py::cast(*d.labels) : py::object(py::none()));
      },
      py::arg("images"), py::arg("labels") = py::none(),
      "(examples, labels or None) from IDX files, optionally gzipped.");

  m.def(
      "binarize",
      [](const Matrix& x, std::uint64_t seed, const std::string& mode) {
        return to_numpy(binarize(dataset_from_arrays(x, std::nullopt), seed, binarize_mode_from_name(mode)).examples);
      },
      py::arg("x"), py::arg("seed") = 0, py::arg("mode") = "threshold");

  m.def(
      "synth_correlated_gaussian",
      [](std::size_t n, double rho, std::uint64_t seed) {
        const GaussianPairs p = synth_correlated_gaussian(n, rho, seed);
        return py::make_tuple(to_numpy(p.x), to_numpy(p.z), p.mutual_information);
      },
      py::arg("n"), py::arg("rho"), py::arg("seed") = 0,
      "(x, z, analytic MI in nats) for a bivariate normal with correlation rho.");

  m.def(
      "estimate_mi",
      [](const Matrix& x, const Matrix& mean, const std::optional<Matrix>& log_var,
         std::size_t steps, std::size_t window, std::size_t batch, std::size_t hidden,
         double learning_rate, std::uint64_t seed) {
        MiEstimatorConfig c;
        c.steps = steps;
        c.window = window;
        c.batch = batch;
        c.hidden = hidden;
        c.learning_rate = learning_rate;
        c.seed = seed;
        const DenseArray xd = to_dense(x), md = to_dense(mean);
        const DenseArray lv = log_var ? to_dense(*log_var) : DenseArray();
        MiEstimate e;
        {
          py::gil_scoped_release release;
          e = estimate_mi(xd, md, lv, c);
        }
        py::dict out;
        out["nats"] = e.nats;
        out["ema_variance"] = e.ema_variance;
        out["converged"] = e.converged;
        out["trace"] = e.trace;
        return out;
      },
      py::arg("x"), py::arg("mean"), py::arg("log_var") = py::none(), py::arg("steps") = 3000,
      py::arg("window") = 500, py::arg("batch") = 256, py::arg("hidden") = 128,
      py::arg("learning_rate") = 5e-4, py::arg("seed") = 0,
      "Donsker-Varadhan MI estimate between rows of x and codes z ~ N(mean, exp(log_var)).");

  m.def(
      "mi_lower_bound",
      [](const std::string& divergence, const Matrix& joint, const Matrix& marginal) {
        diff::Graph g;
        return mi_lower_bound(divergence_from_name(divergence), g.constant(to_dense(joint)),
                              g.constant(to_dense(marginal)))
            .value()
            .item();
      },
      py::arg("divergence"), py::arg("joint"), py::arg("marginal"),
      "Batch bound from critic scores: 'kl-f-dual' or 'dv'.");

  m.def(
      "kl_term",
      [](const Matrix& mean, const Matrix& log_var) {
        return kl_term(PosteriorTable{to_dense(mean), to_dense(log_var)});
      },
      py::arg("mean"), py::arg("log_var"));
  m.def(
      "active_units",
      [](const Matrix& means, double epsilon) { return active_units(to_dense(means), epsilon); },
      py::arg("means"), py::arg("epsilon") = kActiveUnitEpsilon);
  m.def(
      "probe_accuracy",
      [](const Matrix& train_x, const std::vector<int>& train_y, const Matrix& test_x,
         const std::vector<int>& test_y, std::vector<std::size_t> hidden, std::size_t epochs,
         std::uint64_t seed) {
        ProbeConfig c;
        c.hidden = std::move(hidden);
        c.epochs = epochs;
        c.seed = seed;
        return probe_accuracy(to_dense(train_x), train_y, to_dense(test_x), test_y, c);
      },
      py::arg("train_x"), py::arg("train_y"), py::arg("test_x"), py::arg("test_y"),
      py::arg("hidden") = std::vector<std::size_t>{}, py::arg("epochs") = 30, py::arg("seed") = 0);
}
