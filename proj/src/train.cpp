#include "adaprl/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "adaprl/rng.hpp"

namespace adaprl {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

struct DatasetLayout {
  std::size_t numeric = 0, targets = 0;
  std::vector<std::size_t> vocab_sizes;
};

DatasetLayout layout_of(const Dataset& ds) {
  DatasetLayout l;
  for (const Column& c : ds.columns) {
    if (c.kind == ColumnKind::Numeric) ++l.numeric;
    if (c.kind == ColumnKind::Categorical) l.vocab_sizes.push_back(c.vocab.size());
    if (c.kind == ColumnKind::Target) ++l.targets;
  }
  return l;
}

void check_layout(const char* op, const MlpConfig& mlp, const Dataset& ds, bool need_targets) {
  DatasetLayout l = layout_of(ds);
  if (l.numeric != mlp.numeric)
    fail(std::string(op) + ": dataset has " + std::to_string(l.numeric) + " numeric features, model expects " +
         std::to_string(mlp.numeric));
  if (l.vocab_sizes != mlp.vocab_sizes)
    fail(std::string(op) + ": dataset categorical vocabularies do not match the model's");
  if (need_targets && l.targets != mlp.outputs)
    fail(std::string(op) + ": dataset has " + std::to_string(l.targets) + " target columns, model expects " +
         std::to_string(mlp.outputs));
}

std::vector<double> targets_flat(const Dataset& ds) {
  std::vector<std::size_t> tc = ds.target_indices();
  std::vector<double> out;
  out.reserve(ds.rows * tc.size());
  for (std::size_t r = 0; r < ds.rows; ++r)
    for (std::size_t c : tc) out.push_back(ds.columns[c].reals[r]);
  return out;
}

std::vector<Tensor> collect_grads(const std::unordered_map<NodeId, Tensor>& map, const std::vector<NodeId>& ids,
                                  const std::vector<Tensor>& params) {
  std::vector<Tensor> grads;
  grads.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = map.find(ids[i]);
    grads.push_back(it != map.end() ? it->second : Tensor::zeros(params[i].shape));
  }
  return grads;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) fail("TrainConfig: learning_rate must be positive, got " + std::to_string(learning_rate));
  if (epochs < 1) fail("TrainConfig: epochs must be at least 1");
  if (batch_size < 2) fail("TrainConfig: batch_size must be at least 2 (a pair needs two samples)");
  if (horizon < 1) fail("TrainConfig: horizon must be at least 1");
  if (loss.alpha < 0) fail("TrainConfig: alpha must be non-negative, got " + std::to_string(loss.alpha));
  if (loss.theta < 0) fail("TrainConfig: theta must be non-negative, got " + std::to_string(loss.theta));
  if (!(loss.keep_fraction > 0) || loss.keep_fraction > 1)
    fail("TrainConfig: keep_fraction must lie in (0,1], got " + std::to_string(loss.keep_fraction));
  if (loss.reg_kind == RegKind::Huber && !(loss.huber_delta > 0))
    fail("TrainConfig: huber_delta must be positive, got " + std::to_string(loss.huber_delta));
}

AdamState AdamState::like(const std::vector<Tensor>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor& p : params) {
    s.m.push_back(Tensor::zeros(p.shape));
    s.v.push_back(Tensor::zeros(p.shape));
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               double beta1, double beta2, double epsilon) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    fail("adam_step: parameter, gradient, and state lists must align");
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]))
      fail("adam_step: gradient shape " + shape_str(grads[i].shape) + " does not match parameter " +
           shape_str(params[i].shape));
    for (std::size_t e = 0; e < params[i].numel(); ++e) {
      const double g = grads[i].values[e];
      double& m = state.m[i].values[e];
      double& v = state.v[i].values[e];
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g * g;
      params[i].values[e] -= lr * (m / c1) / (std::sqrt(v / c2) + epsilon);
    }
  }
}

TrainState fit(const TrainConfig& config, const MlpConfig& mlp, const Dataset& train, const Dataset& valid,
               const LogSink& log) {
  config.validate();
  mlp.validate();
  if (train.rows == 0) fail("fit: training dataset is empty");
  if (valid.rows == 0) fail("fit: validation dataset is empty");
  if (train.schema() != valid.schema()) fail("fit: train and valid schemas differ");
  for (std::size_t i = 0; i < train.columns.size(); ++i)
    if (train.columns[i].kind == ColumnKind::Categorical && train.columns[i].vocab != valid.columns[i].vocab)
      fail("fit: train and valid vocabularies differ for column '" + train.columns[i].name + "'");
  check_layout("fit", mlp, train, true);
  if (config.loss.mode == LossMode::Single && mlp.outputs != 1)
    fail("fit: single mode requires exactly 1 target column, got " + std::to_string(mlp.outputs) +
         " (use multi_task or time_series)");
  if (config.loss.mode == LossMode::TimeSeries && mlp.outputs % config.horizon != 0)
    fail("fit: horizon " + std::to_string(config.horizon) + " does not divide the target count " +
         std::to_string(mlp.outputs));

  std::vector<std::string> cat_names;
  for (const Column& c : train.columns)
    if (c.kind == ColumnKind::Categorical) cat_names.push_back(c.name);

  TrainState st;
  st.pair = ModelPair::init(mlp, config.seed, cat_names);
  st.opt_main = AdamState::like(st.pair.main.params);
  st.opt_aux = AdamState::like(st.pair.aux.params);

  ModelPair best = st.pair;
  EarlyStopper stopper{config.patience};

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, epoch));
    std::vector<std::size_t> order = shuffled_indices(train.rows, rng);
    std::vector<nlohmann::json> lines;

    std::size_t step = 0;
    for (std::size_t begin = 0; begin < train.rows; begin += config.batch_size) {
      ++step;
      const std::size_t end = std::min(train.rows, begin + config.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      Batch batch = gather_rows(train, idx);

      Graph g;
      MainForward f = forward_main(g, st.pair, batch);
      AuxForward a = forward_aux(g, st.pair, batch);
      NodeId pred = f.pred;
      Tensor target = batch.targets;
      if (config.loss.mode == LossMode::TimeSeries) {
        const std::size_t variates = mlp.outputs / config.horizon;
        pred = g.reshape(pred, {idx.size(), config.horizon, variates});
        target = Tensor(std::vector<std::size_t>{idx.size(), config.horizon, variates}, batch.targets.values);
      }
      const std::uint64_t mask_seed = mix_seed(mix_seed(config.seed, epoch), step);
      AdaprlParts parts = adaprl_loss(g, pred, target, a.mu, a.sigma2, config.loss, mask_seed);

      const double main_v = g.value(parts.main).scalar_value();
      const double aux_v = g.value(parts.aux).scalar_value();
      if (!std::isfinite(main_v) || !std::isfinite(aux_v))
        throw TrainAbort("fit: non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                             ": main loss " + std::to_string(main_v) + ", aux loss " + std::to_string(aux_v),
                         epoch, step, main_v, aux_v);
      st.steps.push_back({epoch, step, main_v, aux_v});
      if (log)
        lines.push_back({{"epoch", epoch}, {"step", step}, {"main_loss", main_v}, {"aux_loss", aux_v}});

      auto main_grads = g.backward(parts.main);
      adam_step(st.pair.main.params, collect_grads(main_grads, f.params, st.pair.main.params), st.opt_main,
                config.learning_rate, config.beta1, config.beta2, config.epsilon);
      auto aux_grads = g.backward(parts.aux);
      adam_step(st.pair.aux.params, collect_grads(aux_grads, a.params, st.pair.aux.params), st.opt_aux,
                config.learning_rate, config.beta1, config.beta2, config.epsilon);
    }

    Predictions p = predict_rows(st.pair, valid);
    const double vmse = mse(p.yhat, targets_flat(valid));
    st.valid_mse.push_back(vmse);
    st.epochs_run = epoch;
    if (log) {
      lines.back()["valid_mse"] = vmse;
      for (const nlohmann::json& line : lines) log(line.dump());
    }
    const bool halt = stopper.observe(vmse, epoch);
    if (stopper.best_index == epoch) best = st.pair;
    if (halt) break;
  }

  st.best_valid_mse = stopper.best;
  st.best_epoch = stopper.best_index;
  st.pair = best;
  return st;
}

Predictions predict_rows(const ModelPair& pair, const Dataset& ds) {
  check_layout("predict", pair.main.config, ds, false);
  Predictions out;
  out.rows = ds.rows;
  out.width = pair.main.config.outputs;
  out.yhat.reserve(ds.rows * out.width);
  out.mu.reserve(ds.rows * out.width);
  out.sigma.reserve(ds.rows * out.width);

  constexpr std::size_t kChunk = 512;
  for (std::size_t begin = 0; begin < ds.rows; begin += kChunk) {
    const std::size_t end = std::min(ds.rows, begin + kChunk);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    Batch batch = gather_rows(ds, idx);
    Graph g;
    MainForward f = forward_main(g, pair, batch);
    AuxForward a = forward_aux(g, pair, batch);
    const std::vector<double>& yh = g.value(f.pred).values;
    out.yhat.insert(out.yhat.end(), yh.begin(), yh.end());
    const std::vector<double>& mu = g.value(a.mu).values;
    out.mu.insert(out.mu.end(), mu.begin(), mu.end());
    for (double s2 : g.value(a.sigma2).values) out.sigma.push_back(std::sqrt(s2));
  }
  return out;
}

EvalResult evaluate(const ModelPair& pair, const Dataset& ds) {
  check_layout("evaluate", pair.main.config, ds, true);
  if (ds.rows == 0) fail("evaluate: dataset is empty");

  EvalResult r;
  r.pred = predict_rows(pair, ds);
  const std::vector<double> y = targets_flat(ds);
  r.report.mse = mse(r.pred.yhat, y);
  r.report.mae = mae(r.pred.yhat, y);
  r.report.kendall_tau = kendall_tau(r.pred.yhat, y);

  if (auto wi = ds.weight_index()) {
    std::vector<double> w;
    w.reserve(y.size());
    for (std::size_t row = 0; row < ds.rows; ++row)
      for (std::size_t t = 0; t < r.pred.width; ++t) w.push_back(ds.columns[*wi].reals[row]);
    try {
      r.report.weighted_r2 = weighted_r2(r.pred.yhat, y, w);
    } catch (const std::invalid_argument&) {
      // degenerate weights/targets: leave the optional empty
    }
  }

  std::vector<double> abs_err(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) abs_err[i] = std::fabs(y[i] - r.pred.yhat[i]);
  try {
    r.report.spearman_sigma_error = spearman(r.pred.sigma, abs_err);
  } catch (const std::invalid_argument&) {
    // constant sigma or error sequence: correlation undefined
  }
  return r;
}

}  // namespace adaprl
