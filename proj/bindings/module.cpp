#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "adaprl/data.hpp"
#include "adaprl/graph.hpp"
#include "adaprl/losses.hpp"
#include "adaprl/metrics.hpp"
#include "adaprl/run_config.hpp"
#include "adaprl/runner.hpp"

namespace py = pybind11;
using namespace adaprl;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DArray& a) {
  if (a.ndim() < 1) throw std::invalid_argument("expected an array with at least one dimension");
  std::vector<std::size_t> shape(static_cast<std::size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> out(shape);
  std::copy(t.values.begin(), t.values.end(), out.mutable_data());
  return out;
}

PairType pair_type_of(const std::string& s) {
  if (s == "mae") return PairType::MAE;
  if (s == "rmse") return PairType::RMSE;
  throw std::invalid_argument("pair_type must be 'mae' or 'rmse', got '" + s + "'");
}

LossSpec spec_of(double theta, const std::string& pair_type, double keep_fraction = 1.0) {
  LossSpec s;
  s.theta = theta;
  s.pair_type = pair_type_of(pair_type);
  s.keep_fraction = keep_fraction;
  return s;
}

// Value of a scalar loss plus its gradient with respect to the predictions.
py::tuple value_and_grad(Graph& g, NodeId pred_leaf, NodeId loss) {
  auto grads = g.backward(loss);
  return py::make_tuple(g.value(loss).scalar_value(), to_array(grads.at(pred_leaf)));
}

}  // namespace

PYBIND11_MODULE(_adaprl, mod) {
  mod.doc() = "Confidence-weighted pairwise regression losses, metrics, and training harness";

  mod.def(
      "prl",
      [](const DArray& pred, const DArray& target, double theta, const std::string& pair_type) {
        Graph g;
        Tensor t = to_tensor(target);
        NodeId p = g.leaf(to_tensor(pred));
        NodeId loss = prl_loss(g, p, t, hinge_mask(t, theta), pair_type_of(pair_type));
        return value_and_grad(g, p, loss);
      },
      py::arg("pred"), py::arg("target"), py::arg("theta") = 0.0, py::arg("pair_type") = "mae",
      "Pairwise ranking loss -> (value, grad wrt pred)");

  mod.def(
      "cprl",
      [](const DArray& pred, const DArray& target, const DArray& sigma2, double theta,
         const std::string& pair_type) {
        Graph g;
        Tensor t = to_tensor(target);
        Tensor confidence = confidence_matrix(uncertainty_matrix(to_tensor(sigma2)));
        NodeId p = g.leaf(to_tensor(pred));
        NodeId loss = cprl_loss(g, p, t, hinge_mask(t, theta), confidence, pair_type_of(pair_type));
        return value_and_grad(g, p, loss);
      },
      py::arg("pred"), py::arg("target"), py::arg("sigma2"), py::arg("theta") = 0.0, py::arg("pair_type") = "mae",
      "Confidence-weighted pairwise loss -> (value, grad wrt pred)");

  mod.def(
      "mcprl",
      [](const DArray& pred, const DArray& target, const DArray& sigma2, double theta,
         const std::string& pair_type) {
        Graph g;
        NodeId p = g.leaf(to_tensor(pred));
        NodeId loss = mcprl_loss(g, p, to_tensor(target), to_tensor(sigma2), spec_of(theta, pair_type));
        return value_and_grad(g, p, loss);
      },
      py::arg("pred"), py::arg("target"), py::arg("sigma2"), py::arg("theta") = 0.0, py::arg("pair_type") = "mae",
      "Per-target-column pairwise loss on [B, N] arrays -> (value, grad wrt pred)");

  mod.def(
      "mtcprl",
      [](const DArray& pred, const DArray& target, const DArray& sigma2, double theta,
         const std::string& pair_type) {
        Graph g;
        NodeId p = g.leaf(to_tensor(pred));
        NodeId loss = mtcprl_loss(g, p, to_tensor(target), to_tensor(sigma2), spec_of(theta, pair_type));
        return value_and_grad(g, p, loss);
      },
      py::arg("pred"), py::arg("target"), py::arg("sigma2"), py::arg("theta") = 0.0, py::arg("pair_type") = "mae",
      "Per-variate pairwise loss on [B, T, N] arrays -> (value, grad wrt pred)");

  mod.def(
      "scprl",
      [](const DArray& pred, const DArray& target, const DArray& sigma2, double keep_fraction,
         std::uint64_t mask_seed, double theta, const std::string& pair_type) {
        Graph g;
        NodeId p = g.leaf(to_tensor(pred));
        NodeId loss =
            scprl_loss(g, p, to_tensor(target), to_tensor(sigma2), spec_of(theta, pair_type, keep_fraction),
                       mask_seed);
        return value_and_grad(g, p, loss);
      },
      py::arg("pred"), py::arg("target"), py::arg("sigma2"), py::arg("keep_fraction"), py::arg("mask_seed") = 0,
      py::arg("theta") = 0.0, py::arg("pair_type") = "mae",
      "Sparse pairwise loss with a seeded keep-set -> (value, grad wrt pred)");

  mod.def(
      "nll",
      [](const DArray& mu, const DArray& sigma2, const DArray& target) {
        Graph g;
        NodeId m = g.leaf(to_tensor(mu));
        NodeId s = g.leaf(to_tensor(sigma2));
        NodeId loss = nll_loss(g, m, s, to_tensor(target));
        auto grads = g.backward(loss);
        return py::make_tuple(g.value(loss).scalar_value(), to_array(grads.at(m)), to_array(grads.at(s)));
      },
      py::arg("mu"), py::arg("sigma2"), py::arg("target"),
      "Gaussian negative log-likelihood -> (value, grad wrt mu, grad wrt sigma2)");

  mod.def(
      "hinge_mask", [](const DArray& target, double theta) { return to_array(hinge_mask(to_tensor(target), theta)); },
      py::arg("target"), py::arg("theta") = 0.0, "0/1 matrix with entry (i,j) = 1 iff y_i - y_j > theta");

  mod.def(
      "uncertainty_matrix", [](const DArray& sigma2) { return to_array(uncertainty_matrix(to_tensor(sigma2))); },
      py::arg("sigma2"), "U(i,j) = sigma2_i + sigma2_j");

  mod.def(
      "confidence_matrix", [](const DArray& uncertainty) { return to_array(confidence_matrix(to_tensor(uncertainty))); },
      py::arg("uncertainty"), "2 (max(U) - U) / (max(U) - min(U)); all ones when degenerate");

  mod.def(
      "sample_keep_pairs",
      [](std::size_t m, double p, std::uint64_t seed) { return sample_keep_pairs(m, p, seed); }, py::arg("m"),
      py::arg("p"), py::arg("seed"), "Kept (i, j) index pairs out of the m*m ordered candidates");

  mod.def("mse", &mse, py::arg("pred"), py::arg("target"));
  mod.def("mae", &mae, py::arg("pred"), py::arg("target"));
  mod.def("kendall_tau", &kendall_tau, py::arg("a"), py::arg("b"), "Tie-corrected (tau-b) rank correlation");
  mod.def("spearman", &spearman, py::arg("a"), py::arg("b"), "Rank correlation of average ranks");
  mod.def("weighted_r2", &weighted_r2, py::arg("pred"), py::arg("target"), py::arg("weights"),
          "1 - sum(w (y - pred)^2) / sum(w y^2)");

  mod.def(
      "synth",
      [](std::size_t n, std::size_t d, std::uint64_t seed, bool suppress_noise) {
        SynthData s = synth_heteroscedastic(n, d, seed, suppress_noise);
        py::array_t<double> x({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(d)});
        double* xp = x.mutable_data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) xp[i * d + j] = s.data.columns[j].reals[i];
        py::dict out;
        out["x"] = x;
        out["y"] = py::cast(s.data.column("y").reals);
        out["f_star"] = py::cast(s.f_star);
        out["sigma_star"] = py::cast(s.sigma_star);
        return out;
      },
      py::arg("n"), py::arg("d"), py::arg("seed"), py::arg("suppress_noise") = false,
      "Heteroscedastic synthetic regression set with its hidden ground truth");

  mod.def(
      "run_train",
      [](const std::string& config_json) {
        TrainArtifacts art = run_train(parse_run_config(config_json));
        py::dict out;
        out["dir"] = art.dir;
        out["checkpoint"] = art.checkpoint;
        out["log"] = art.log;
        out["metrics"] = art.metrics;
        return out;
      },
      py::arg("config_json"), "Train once from a JSON config string; returns the artifact paths");
}
