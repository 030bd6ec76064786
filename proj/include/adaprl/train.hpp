#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaprl/data.hpp"
#include "adaprl/losses.hpp"
#include "adaprl/metrics.hpp"
#include "adaprl/model.hpp"

namespace adaprl {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  LossSpec loss;
  std::size_t horizon = 1;  // time-series mode splits d_t outputs into horizon x variates
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  void validate() const;
};

// Bias-corrected Adam. One state per network; the two never mix.
struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t t = 0;

  static AdamState like(const std::vector<Tensor>& params);
};
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               double beta1, double beta2, double epsilon);

struct StepRecord {
  std::size_t epoch = 0, step = 0;  // both 1-based
  double main_loss = 0, aux_loss = 0;
};

struct TrainState {
  ModelPair pair;  // parameters restored to the best validation epoch
  AdamState opt_main, opt_aux;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_valid_mse = std::numeric_limits<double>::infinity();
  std::vector<StepRecord> steps;
  std::vector<double> valid_mse;  // one entry per completed epoch
};

// Early-stop bookkeeping: halt once the metric has gone more than `patience`
// consecutive observations without a strict improvement.
struct EarlyStopper {
  std::size_t patience = 0;
  std::size_t wait = 0;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;

  // Returns true when training should halt after this observation.
  bool observe(double metric, std::size_t index) {
    if (metric < best) {
      best = metric;
      best_index = index;
      wait = 0;
      return false;
    }
    return ++wait > patience;
  }
};

// Raised when a loss turns non-finite; carries the exact step coordinates.
struct TrainAbort : std::runtime_error {
  std::size_t epoch = 0, step = 0;
  double main_loss = 0, aux_loss = 0;
  TrainAbort(const std::string& msg, std::size_t epoch_, std::size_t step_, double main_, double aux_)
      : std::runtime_error(msg), epoch(epoch_), step(step_), main_loss(main_), aux_loss(aux_) {}
};

// Receives one complete JSON line per training step; the last step of each
// epoch carries a "valid_mse" field.
using LogSink = std::function<void(const std::string&)>;

// Minibatch training of both networks: per step one Adam update to the main
// network from the combined loss and one to the auxiliary network from the
// NLL, both read from the same forward graph. Early-stops once validation MSE
// has not strictly improved for more than `patience` consecutive epochs.
TrainState fit(const TrainConfig& config, const MlpConfig& mlp, const Dataset& train, const Dataset& valid,
               const LogSink& log = {});

struct Predictions {
  std::size_t rows = 0, width = 0;  // width = d_t
  std::vector<double> yhat, mu, sigma;  // row-major [rows x width]; sigma = sqrt(sigma^2)
};
Predictions predict_rows(const ModelPair& pair, const Dataset& ds);

struct EvalResult {
  MetricReport report;
  Predictions pred;
};
// Point metrics come from the main network over all flattened targets;
// weighted_r2 appears when the dataset has a weight column, and
// spearman_sigma_error correlates exported sigma with absolute error.
EvalResult evaluate(const ModelPair& pair, const Dataset& ds);

}  // namespace adaprl
