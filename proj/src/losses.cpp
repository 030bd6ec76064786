#include "adaprl/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "adaprl/rng.hpp"

namespace adaprl {

namespace {

[[noreturn]] void fail(const char* op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_positive(const char* op, const Tensor& sigma2) {
  for (std::size_t i = 0; i < sigma2.numel(); ++i)
    if (!(sigma2.values[i] > 0.0))
      fail(op, "sigma^2 must be strictly positive, got " + std::to_string(sigma2.values[i]) + " at flat index " +
                   std::to_string(i));
}

// One comparison pool worth of selected pairs, already flattened to value
// indices of the prediction tensor.
struct PairBatch {
  PairList pairs;
  std::vector<double> dy;  // target difference per pair
  std::vector<double> w;   // confidence weight per pair
  std::size_t size() const { return dy.size(); }
};

// Shared tail of every pairwise loss:
//   e   = (pred_i - pred_j) - (y_i - y_j)      per selected pair
//   sum = sum of w * |e|   (or w * e^2)
//   MAE = sum / D          RMSE = sqrt(sum / D)
// An empty selection yields a scalar zero that still depends on pred so its
// gradient is exactly zero rather than undefined.
NodeId pair_loss_graph(Graph& g, NodeId pred, PairBatch&& pb, PairType type) {
  std::size_t d = pb.size();
  if (d == 0) return g.scale(g.reduce_sum(pred), 0.0);
  NodeId ds = g.pair_diff(pred, std::move(pb.pairs));
  NodeId e = g.sub(ds, g.leaf(Tensor::vec(std::move(pb.dy))));
  NodeId m = type == PairType::MAE ? g.abs(e) : g.square(e);
  auto entries = std::make_shared<WeightedIndexList>();
  entries->idx.resize(d);
  for (std::size_t t = 0; t < d; ++t) entries->idx[t] = static_cast<std::uint32_t>(t);
  entries->w = std::move(pb.w);
  NodeId total = g.masked_weighted_sum(m, std::move(entries));
  NodeId loss = g.scale(total, 1.0 / static_cast<double>(d));
  return type == PairType::RMSE ? g.sqrt(loss) : loss;
}

// Pairs for one flat comparison pool from an explicit mask and optional
// confidence matrix (row-major traversal).
PairBatch pairs_from_mask(const char* op, const Tensor& target, const Tensor& mask, const Tensor* confidence) {
  std::size_t b = target.numel();
  if (mask.rank() != 2 || mask.shape[0] != b || mask.shape[1] != b)
    fail(op, "mask shape " + shape_str(mask.shape) + " does not match " + std::to_string(b) + " rows");
  if (confidence && !confidence->same_shape(mask))
    fail(op, "confidence shape " + shape_str(confidence->shape) + " does not match mask " + shape_str(mask.shape));
  PairBatch pb;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double m = mask.values[i * b + j];
      if (m == 0.0) continue;
      if (m != 1.0) fail(op, "mask must be 0/1 valued, got " + std::to_string(m));
      pb.pairs.a.push_back(static_cast<std::uint32_t>(i));
      pb.pairs.b.push_back(static_cast<std::uint32_t>(j));
      pb.dy.push_back(target.values[i] - target.values[j]);
      pb.w.push_back(confidence ? confidence->values[i * b + j] : 1.0);
    }
  return pb;
}

// Per-variate confidence scale derived from the variate's sigma^2 column.
// max(U) over the full B x B uncertainty matrix is sigma2_max + sigma2_max and
// min(U) is sigma2_min + sigma2_min, so no matrix is materialized. The
// degenerate case (all uncertainties equal) weighs every pair with 1.
struct ConfidenceScale {
  double umax = 0.0, range = 0.0;
  bool degenerate = true;
  double weight(double ui) const { return degenerate ? 1.0 : 2.0 * (umax - ui) / range; }
};

ConfidenceScale confidence_scale(const double* sigma2, std::size_t rows, std::size_t stride) {
  double lo = sigma2[0], hi = sigma2[0];
  for (std::size_t r = 1; r < rows; ++r) {
    double v = sigma2[r * stride];
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  ConfidenceScale s;
  s.umax = hi + hi;
  s.range = s.umax - (lo + lo);
  s.degenerate = s.range == 0.0;
  return s;
}

// Dense per-variate pair enumeration over `rows` comparison rows and N
// variates laid out row-major, i.e. value index = row * n + k.
PairBatch pairs_per_variate(const char* op, const Tensor& target, const Tensor& sigma2, double theta) {
  std::size_t n = target.shape.back();
  std::size_t rows = target.numel() / std::max<std::size_t>(n, 1);
  require_positive(op, sigma2);
  PairBatch pb;
  for (std::size_t k = 0; k < n; ++k) {
    ConfidenceScale cs = confidence_scale(sigma2.values.data() + k, rows, n);
    for (std::size_t i = 0; i < rows; ++i) {
      double yi = target.values[i * n + k];
      double si = sigma2.values[i * n + k];
      for (std::size_t j = 0; j < rows; ++j) {
        double dy = yi - target.values[j * n + k];
        if (!(dy > theta)) continue;
        pb.pairs.a.push_back(static_cast<std::uint32_t>(i * n + k));
        pb.pairs.b.push_back(static_cast<std::uint32_t>(j * n + k));
        pb.dy.push_back(dy);
        pb.w.push_back(cs.weight(si + sigma2.values[j * n + k]));
      }
    }
  }
  return pb;
}

// Sparse counterpart: only candidate pairs in `keep` are examined, the same
// keep-set for every variate.
PairBatch pairs_per_variate_sparse(const char* op, const Tensor& target, const Tensor& sigma2, double theta,
                                   const std::vector<std::pair<std::uint32_t, std::uint32_t>>& keep) {
  std::size_t n = target.shape.back();
  std::size_t rows = target.numel() / std::max<std::size_t>(n, 1);
  require_positive(op, sigma2);
  PairBatch pb;
  for (std::size_t k = 0; k < n; ++k) {
    ConfidenceScale cs = confidence_scale(sigma2.values.data() + k, rows, n);
    for (auto [i, j] : keep) {
      double dy = target.values[i * n + k] - target.values[j * n + k];
      if (!(dy > theta)) continue;
      pb.pairs.a.push_back(static_cast<std::uint32_t>(i * n + k));
      pb.pairs.b.push_back(static_cast<std::uint32_t>(j * n + k));
      pb.dy.push_back(dy);
      pb.w.push_back(cs.weight(sigma2.values[i * n + k] + sigma2.values[j * n + k]));
    }
  }
  return pb;
}

void require_same_shape3(const char* op, const Tensor& pred, const Tensor& target, const Tensor& sigma2,
                         std::size_t rank) {
  if (pred.rank() != rank) fail(op, "prediction must have rank " + std::to_string(rank) + ", got " + shape_str(pred.shape));
  if (!pred.same_shape(target)) fail(op, "shape mismatch " + shape_str(pred.shape) + " vs target " + shape_str(target.shape));
  if (!pred.same_shape(sigma2)) fail(op, "shape mismatch " + shape_str(pred.shape) + " vs sigma^2 " + shape_str(sigma2.shape));
  if (pred.numel() == 0) fail(op, "empty batch");
}

}  // namespace

NodeId pointwise_loss(Graph& g, NodeId pred, const Tensor& target, RegKind kind, double huber_delta) {
  const Tensor& tp = g.value(pred);
  if (!tp.same_shape(target))
    fail("pointwise_loss", "shape mismatch " + shape_str(tp.shape) + " vs " + shape_str(target.shape));
  if (tp.numel() == 0) fail("pointwise_loss", "empty batch");
  NodeId r = g.sub(pred, g.leaf(target));
  switch (kind) {
    case RegKind::L2:
      return g.reduce_mean(g.square(r));
    case RegKind::L1:
      return g.reduce_mean(g.abs(r));
    case RegKind::Huber: {
      if (!(huber_delta > 0.0)) fail("pointwise_loss", "huber delta must be positive, got " + std::to_string(huber_delta));
      NodeId a = g.abs(r);
      NodeId c = g.clamp(a, 0.0, huber_delta);  // min(|r|, delta); |r| >= 0 so the low bound never bites
      NodeId quad = g.scale(g.square(c), 0.5);
      NodeId lin = g.scale(g.sub(a, c), huber_delta);
      return g.reduce_mean(g.add(quad, lin));
    }
  }
  fail("pointwise_loss", "unknown kind");
}

Tensor hinge_mask(const Tensor& targets, double theta) {
  std::size_t b = targets.numel();
  if (b == 0) fail("hinge_mask", "empty targets");
  Tensor m = Tensor::zeros({b, b});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      if (targets.values[i] - targets.values[j] > theta) m.values[i * b + j] = 1.0;
  return m;
}

std::size_t pair_count(const Tensor& mask) {
  std::size_t d = 0;
  for (double v : mask.values) {
    if (v == 1.0)
      ++d;
    else if (v != 0.0)
      fail("pair_count", "mask must be 0/1 valued, got " + std::to_string(v));
  }
  return d;
}

NodeId prl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& mask, PairType type) {
  const Tensor& tp = g.value(pred);
  if (tp.numel() != target.numel())
    fail("prl_loss", "shape mismatch " + shape_str(tp.shape) + " vs target " + shape_str(target.shape));
  return pair_loss_graph(g, pred, pairs_from_mask("prl_loss", target, mask, nullptr), type);
}

Tensor uncertainty_matrix(const Tensor& sigma2) {
  std::size_t b = sigma2.numel();
  if (b == 0) fail("uncertainty_matrix", "empty input");
  require_positive("uncertainty_matrix", sigma2);
  Tensor u = Tensor::zeros({b, b});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) u.values[i * b + j] = sigma2.values[i] + sigma2.values[j];
  return u;
}

Tensor confidence_matrix(const Tensor& uncertainty) {
  if (uncertainty.numel() == 0) fail("confidence_matrix", "empty input");
  double lo = uncertainty.values[0], hi = uncertainty.values[0];
  for (double v : uncertainty.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Tensor c = uncertainty;
  if (hi == lo) {
    for (double& v : c.values) v = 1.0;
    return c;
  }
  double range = hi - lo;
  for (double& v : c.values) v = 2.0 * (hi - v) / range;
  return c;
}

NodeId cprl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& mask, const Tensor& confidence,
                 PairType type) {
  const Tensor& tp = g.value(pred);
  if (tp.numel() != target.numel())
    fail("cprl_loss", "shape mismatch " + shape_str(tp.shape) + " vs target " + shape_str(target.shape));
  return pair_loss_graph(g, pred, pairs_from_mask("cprl_loss", target, mask, &confidence), type);
}

NodeId nll_loss(Graph& g, NodeId mu, NodeId sigma2, const Tensor& target) {
  const Tensor& tm = g.value(mu);
  const Tensor& ts = g.value(sigma2);
  if (!tm.same_shape(ts)) fail("nll_loss", "shape mismatch mu " + shape_str(tm.shape) + " vs sigma^2 " + shape_str(ts.shape));
  if (tm.numel() != target.numel())
    fail("nll_loss", "shape mismatch mu " + shape_str(tm.shape) + " vs target " + shape_str(target.shape));
  if (tm.numel() == 0) fail("nll_loss", "empty batch");
  require_positive("nll_loss", ts);
  NodeId r = g.sub(g.leaf(Tensor(tm.shape, target.values)), mu);
  NodeId quad = g.div(g.square(r), g.scale(sigma2, 2.0));
  NodeId logterm = g.scale(g.log(sigma2), 0.5);
  return g.reduce_mean(g.add(quad, logterm));
}

NodeId mcprl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& sigma2, const LossSpec& spec) {
  require_same_shape3("mcprl_loss", g.value(pred), target, sigma2, 2);
  return pair_loss_graph(g, pred, pairs_per_variate("mcprl_loss", target, sigma2, spec.theta), spec.pair_type);
}

NodeId mtcprl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& sigma2, const LossSpec& spec) {
  require_same_shape3("mtcprl_loss", g.value(pred), target, sigma2, 3);
  return pair_loss_graph(g, pred, pairs_per_variate("mtcprl_loss", target, sigma2, spec.theta), spec.pair_type);
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> sample_keep_pairs(std::size_t m, double p, std::uint64_t seed) {
  if (!(p > 0.0) || p > 1.0) fail("sample_keep_pairs", "keep fraction must lie in (0, 1], got " + std::to_string(p));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> keep;
  std::uint64_t total = static_cast<std::uint64_t>(m) * m;
  if (p == 1.0) {
    keep.reserve(total);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) keep.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    return keep;
  }
  std::mt19937_64 rng(seed);
  double log1mp = std::log1p(-p);
  std::uint64_t cur = 0;
  while (cur < total) {
    double gap = std::floor(std::log(u01_open(rng)) / log1mp);
    if (gap >= static_cast<double>(total - cur)) break;
    cur += static_cast<std::uint64_t>(gap);
    keep.emplace_back(static_cast<std::uint32_t>(cur / m), static_cast<std::uint32_t>(cur % m));
    ++cur;
  }
  return keep;
}

NodeId scprl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& sigma2, const LossSpec& spec,
                  std::uint64_t mask_seed) {
  require_same_shape3("scprl_loss", g.value(pred), target, sigma2, 3);
  double p = spec.keep_fraction;
  if (!(p > 0.0) || p > 1.0) fail("scprl_loss", "keep fraction must lie in (0, 1], got " + std::to_string(p));
  std::size_t rows = target.shape[0] * target.shape[1];
  if (p == 1.0)  // bit-exact dense path, no sampling involved
    return pair_loss_graph(g, pred, pairs_per_variate("scprl_loss", target, sigma2, spec.theta), spec.pair_type);
  auto keep = sample_keep_pairs(rows, p, mask_seed);
  return pair_loss_graph(g, pred, pairs_per_variate_sparse("scprl_loss", target, sigma2, spec.theta, keep),
                         spec.pair_type);
}

AdaprlParts adaprl_loss(Graph& g, NodeId pred, const Tensor& target, NodeId mu, NodeId sigma2, const LossSpec& spec,
                        std::uint64_t mask_seed) {
  NodeId main = pointwise_loss(g, pred, target, spec.reg_kind, spec.huber_delta);
  if (spec.alpha != 0.0) {
    const Tensor& tp = g.value(pred);
    const Tensor& sig_raw = g.value(sigma2);
    if (sig_raw.numel() != tp.numel())
      fail("adaprl_loss", "sigma^2 has " + std::to_string(sig_raw.numel()) + " values for " +
                              std::to_string(tp.numel()) + " predictions");
    // Values only: confidence is constant to the graph, and the auxiliary
    // head's [B, d_t] layout matches the prediction view row-major.
    Tensor sig(tp.shape, sig_raw.values);
    NodeId pair = main;
    if (spec.keep_fraction < 1.0) {
      // Sparse subsampling applies uniformly: view the batch as [rows, 1, N].
      std::size_t n = spec.mode == LossMode::Single ? 1 : tp.shape.back();
      std::size_t rows = tp.numel() / n;
      NodeId view = g.reshape(pred, {rows, 1, n});
      Tensor t3(std::vector<std::size_t>{rows, 1, n}, target.values);
      Tensor s3(std::vector<std::size_t>{rows, 1, n}, sig.values);
      pair = scprl_loss(g, view, t3, s3, spec, mask_seed);
    } else {
      switch (spec.mode) {
        case LossMode::Single: {
          Tensor mask = hinge_mask(target, spec.theta);
          Tensor conf = confidence_matrix(uncertainty_matrix(sig));
          pair = cprl_loss(g, pred, target, mask, conf, spec.pair_type);
          break;
        }
        case LossMode::MultiTask:
          pair = mcprl_loss(g, pred, target, sig, spec);
          break;
        case LossMode::TimeSeries:
          pair = mtcprl_loss(g, pred, target, sig, spec);
          break;
      }
    }
    main = g.add(main, g.scale(pair, spec.alpha));
  }
  NodeId aux = nll_loss(g, mu, sigma2, target);
  return {main, aux};
}

}  // namespace adaprl
