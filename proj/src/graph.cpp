#include "adaprl/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace adaprl {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "subtract";
    case Op::Mul: return "multiply";
    case Op::Div: return "divide";
    case Op::MatMul: return "matmul";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Abs: return "abs";
    case Op::Square: return "square";
    case Op::Softplus: return "softplus";
    case Op::Relu: return "relu";
    case Op::OuterDiff: return "outer-difference";
    case Op::PairDiff: return "pair-difference";
    case Op::MaskedWeightedSum: return "masked-weighted-sum";
    case Op::ReduceSum: return "reduce-sum";
    case Op::ReduceMean: return "reduce-mean";
    case Op::Scale: return "scalar-scale";
    case Op::Clamp: return "clamp";
    case Op::Detach: return "detach";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

namespace {

[[noreturn]] void fail(Op op, const std::string& what) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + what);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Node& Graph::node(NodeId id) const {
  if (id >= nodes_.size()) throw std::invalid_argument("graph: node id out of range");
  return nodes_[id];
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(t);
  return push(std::move(n));
}

NodeId Graph::binary(Op op, NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  // Exact shape match, or one side is a scalar broadcast. No other
  // broadcasting form exists.
  bool a_scalar = ta.numel() == 1;
  bool b_scalar = tb.numel() == 1;
  if (!ta.same_shape(tb) && !a_scalar && !b_scalar)
    fail(op, "shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  const Tensor& big = (ta.numel() >= tb.numel()) ? ta : tb;
  Node n;
  n.op = op;
  n.inputs = {a, b};
  n.value = Tensor::zeros(big.shape);
  std::size_t m = big.numel();
  for (std::size_t i = 0; i < m; ++i) {
    double x = ta.values[a_scalar ? 0 : i];
    double y = tb.values[b_scalar ? 0 : i];
    double r = 0.0;
    switch (op) {
      case Op::Add: r = x + y; break;
      case Op::Sub: r = x - y; break;
      case Op::Mul: r = x * y; break;
      case Op::Div:
        if (y == 0.0) fail(op, "division by zero at flat index " + std::to_string(i));
        r = x / y;
        break;
      default: fail(op, "not a binary op");
    }
    n.value.values[i] = r;
  }
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }
NodeId Graph::div(NodeId a, NodeId b) { return binary(Op::Div, a, b); }

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2)
    fail(Op::MatMul, "expects two rank-2 tensors, got " + shape_str(ta.shape) + " and " + shape_str(tb.shape));
  if (ta.shape[1] != tb.shape[0])
    fail(Op::MatMul, "shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  std::size_t r = ta.shape[0], k = ta.shape[1], c = tb.shape[1];
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a, b};
  n.value = Tensor::zeros({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      double x = ta.values[i * k + t];
      if (x == 0.0) continue;
      const double* brow = tb.values.data() + t * c;
      double* orow = n.value.values.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += x * brow[j];
    }
  return push(std::move(n));
}

NodeId Graph::unary(Op op, NodeId x) {
  const Tensor& tx = value(x);
  Node n;
  n.op = op;
  n.inputs = {x};
  n.value = tx;  // same shape; values overwritten below
  for (std::size_t i = 0; i < tx.numel(); ++i) {
    double v = tx.values[i];
    double r = 0.0;
    switch (op) {
      case Op::Exp:
        r = std::exp(v);
        if (!std::isfinite(r)) fail(op, "overflow at flat index " + std::to_string(i) + " (input " + std::to_string(v) + ")");
        break;
      case Op::Log:
        if (v <= 0.0) fail(op, "non-positive input " + std::to_string(v) + " at flat index " + std::to_string(i));
        r = std::log(v);
        break;
      case Op::Sqrt:
        if (v < 0.0) fail(op, "negative input " + std::to_string(v) + " at flat index " + std::to_string(i));
        r = std::sqrt(v);
        break;
      case Op::Abs: r = std::fabs(v); break;
      case Op::Square: r = v * v; break;
      case Op::Softplus: r = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); break;
      case Op::Relu: r = v > 0.0 ? v : 0.0; break;
      case Op::Detach: r = v; break;
      default: fail(op, "not a unary op");
    }
    n.value.values[i] = r;
  }
  return push(std::move(n));
}

NodeId Graph::exp(NodeId x) { return unary(Op::Exp, x); }
NodeId Graph::log(NodeId x) { return unary(Op::Log, x); }
NodeId Graph::sqrt(NodeId x) { return unary(Op::Sqrt, x); }
NodeId Graph::abs(NodeId x) { return unary(Op::Abs, x); }
NodeId Graph::square(NodeId x) { return unary(Op::Square, x); }
NodeId Graph::softplus(NodeId x) { return unary(Op::Softplus, x); }
NodeId Graph::relu(NodeId x) { return unary(Op::Relu, x); }
NodeId Graph::detach(NodeId x) { return unary(Op::Detach, x); }

NodeId Graph::outer_diff(NodeId v) {
  const Tensor& tv = value(v);
  std::size_t m = tv.numel();
  Node n;
  n.op = Op::OuterDiff;
  n.inputs = {v};
  n.value = Tensor::zeros({m, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) n.value.values[i * m + j] = tv.values[i] - tv.values[j];
  return push(std::move(n));
}

NodeId Graph::pair_diff(NodeId v, PairList pairs) {
  return pair_diff(v, std::make_shared<const PairList>(std::move(pairs)));
}

NodeId Graph::pair_diff(NodeId v, std::shared_ptr<const PairList> pairs) {
  const Tensor& tv = value(v);
  std::size_t m = tv.numel();
  if (pairs->a.size() != pairs->b.size()) fail(Op::PairDiff, "index lists differ in length");
  Node n;
  n.op = Op::PairDiff;
  n.inputs = {v};
  n.value = Tensor::zeros({pairs->size()});
  for (std::size_t t = 0; t < pairs->size(); ++t) {
    std::uint32_t i = pairs->a[t], j = pairs->b[t];
    if (i >= m || j >= m) fail(Op::PairDiff, "pair index out of range for " + shape_str(tv.shape));
    n.value.values[t] = tv.values[i] - tv.values[j];
  }
  n.pairs = std::move(pairs);
  return push(std::move(n));
}

NodeId Graph::masked_weighted_sum(NodeId x, const Tensor& mask, const Tensor& weights) {
  const Tensor& tx = value(x);
  if (!mask.same_shape(tx))
    fail(Op::MaskedWeightedSum, "mask shape mismatch " + shape_str(mask.shape) + " vs " + shape_str(tx.shape));
  if (!weights.same_shape(tx))
    fail(Op::MaskedWeightedSum, "weights shape mismatch " + shape_str(weights.shape) + " vs " + shape_str(tx.shape));
  auto entries = std::make_shared<WeightedIndexList>();
  for (std::size_t i = 0; i < tx.numel(); ++i) {
    double m = mask.values[i];
    if (m == 0.0) continue;
    if (m != 1.0) fail(Op::MaskedWeightedSum, "mask must be 0/1 valued, got " + std::to_string(m));
    entries->idx.push_back(static_cast<std::uint32_t>(i));
    entries->w.push_back(weights.values[i]);
  }
  return masked_weighted_sum(x, std::move(entries));
}

NodeId Graph::masked_weighted_sum(NodeId x, std::shared_ptr<const WeightedIndexList> entries) {
  const Tensor& tx = value(x);
  if (entries->idx.size() != entries->w.size()) fail(Op::MaskedWeightedSum, "entry lists differ in length");
  double s = 0.0;
  for (std::size_t t = 0; t < entries->size(); ++t) {
    std::uint32_t i = entries->idx[t];
    if (i >= tx.numel()) fail(Op::MaskedWeightedSum, "entry index out of range for " + shape_str(tx.shape));
    s += entries->w[t] * tx.values[i];
  }
  Node n;
  n.op = Op::MaskedWeightedSum;
  n.inputs = {x};
  n.value = Tensor::scalar(s);
  n.entries = std::move(entries);
  return push(std::move(n));
}

NodeId Graph::reduce_sum(NodeId x) {
  const Tensor& tx = value(x);
  double s = 0.0;
  for (double v : tx.values) s += v;
  Node n;
  n.op = Op::ReduceSum;
  n.inputs = {x};
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

NodeId Graph::reduce_mean(NodeId x) {
  const Tensor& tx = value(x);
  if (tx.numel() == 0) fail(Op::ReduceMean, "mean of an empty tensor");
  double s = 0.0;
  for (double v : tx.values) s += v;
  Node n;
  n.op = Op::ReduceMean;
  n.inputs = {x};
  n.value = Tensor::scalar(s / static_cast<double>(tx.numel()));
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double factor) {
  const Tensor& tx = value(x);
  Node n;
  n.op = Op::Scale;
  n.inputs = {x};
  n.c0 = factor;
  n.value = tx;
  for (double& v : n.value.values) v *= factor;
  return push(std::move(n));
}

NodeId Graph::clamp(NodeId x, double lo, double hi) {
  if (!(lo <= hi)) fail(Op::Clamp, "invalid bounds [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
  const Tensor& tx = value(x);
  Node n;
  n.op = Op::Clamp;
  n.inputs = {x};
  n.c0 = lo;
  n.c1 = hi;
  n.value = tx;
  for (double& v : n.value.values) v = v < lo ? lo : (v > hi ? hi : v);
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, std::vector<std::size_t> shape) {
  const Tensor& tx = value(x);
  if (Tensor::count(shape) != tx.numel())
    fail(Op::Reshape, "cannot view " + shape_str(tx.shape) + " as " + shape_str(shape));
  Node n;
  n.op = Op::Reshape;
  n.inputs = {x};
  n.value = Tensor(std::move(shape), tx.values);
  return push(std::move(n));
}

std::unordered_map<NodeId, Tensor> Graph::backward(NodeId root) const {
  const Tensor& rv = value(root);
  if (rv.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar, got shape " + shape_str(rv.shape));

  std::vector<Tensor> grad(nodes_.size());
  std::vector<bool> has(nodes_.size(), false);
  auto touch = [&](NodeId id) -> Tensor& {
    if (!has[id]) {
      grad[id] = Tensor::zeros(nodes_[id].value.shape);
      has[id] = true;
    }
    return grad[id];
  };
  touch(root).values[0] = 1.0;

  for (NodeId id = root + 1; id-- > 0;) {
    if (!has[id]) continue;
    const Node& n = nodes_[id];
    const Tensor& g = grad[id];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        const Tensor& ta = nodes_[n.inputs[0]].value;
        const Tensor& tb = nodes_[n.inputs[1]].value;
        bool a_scalar = ta.numel() == 1, b_scalar = tb.numel() == 1;
        Tensor& ga = touch(n.inputs[0]);
        Tensor& gb = touch(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          double gi = g.values[i];
          double x = ta.values[a_scalar ? 0 : i];
          double y = tb.values[b_scalar ? 0 : i];
          double da = 0.0, db = 0.0;
          switch (n.op) {
            case Op::Add: da = gi; db = gi; break;
            case Op::Sub: da = gi; db = -gi; break;
            case Op::Mul: da = gi * y; db = gi * x; break;
            case Op::Div: da = gi / y; db = -gi * x / (y * y); break;
            default: break;
          }
          ga.values[a_scalar ? 0 : i] += da;
          gb.values[b_scalar ? 0 : i] += db;
        }
        break;
      }
      case Op::MatMul: {
        const Tensor& ta = nodes_[n.inputs[0]].value;
        const Tensor& tb = nodes_[n.inputs[1]].value;
        std::size_t r = ta.shape[0], k = ta.shape[1], c = tb.shape[1];
        Tensor& ga = touch(n.inputs[0]);
        Tensor& gb = touch(n.inputs[1]);
        // dA = g * B^T ; dB = A^T * g
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            double gij = g.values[i * c + j];
            if (gij == 0.0) continue;
            for (std::size_t t = 0; t < k; ++t) {
              ga.values[i * k + t] += gij * tb.values[t * c + j];
              gb.values[t * c + j] += gij * ta.values[i * k + t];
            }
          }
        break;
      }
      case Op::Exp:
      case Op::Log:
      case Op::Sqrt:
      case Op::Abs:
      case Op::Square:
      case Op::Softplus:
      case Op::Relu:
      case Op::Clamp:
      case Op::Scale: {
        const Tensor& tx = nodes_[n.inputs[0]].value;
        Tensor& gx = touch(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          double gi = g.values[i];
          double x = tx.values[i];
          double d = 0.0;
          switch (n.op) {
            case Op::Exp: d = n.value.values[i]; break;
            case Op::Log: d = 1.0 / x; break;
            // Guarded so a zero radicand yields a large finite slope, not inf.
            case Op::Sqrt: d = 0.5 / std::sqrt(std::max(x, 1e-12)); break;
            case Op::Abs: d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); break;
            case Op::Square: d = 2.0 * x; break;
            case Op::Softplus: d = sigmoid(x); break;
            case Op::Relu: d = x > 0.0 ? 1.0 : 0.0; break;
            case Op::Clamp: d = (x >= n.c0 && x <= n.c1) ? 1.0 : 0.0; break;
            case Op::Scale: d = n.c0; break;
            default: break;
          }
          gx.values[i] += gi * d;
        }
        break;
      }
      case Op::Detach:
        touch(n.inputs[0]);  // reachable, but receives exactly zero
        break;
      case Op::OuterDiff: {
        Tensor& gx = touch(n.inputs[0]);
        std::size_t m = gx.numel();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            double gij = g.values[i * m + j];
            gx.values[i] += gij;
            gx.values[j] -= gij;
          }
        break;
      }
      case Op::PairDiff: {
        Tensor& gx = touch(n.inputs[0]);
        for (std::size_t t = 0; t < n.pairs->size(); ++t) {
          double gt = g.values[t];
          gx.values[n.pairs->a[t]] += gt;
          gx.values[n.pairs->b[t]] -= gt;
        }
        break;
      }
      case Op::MaskedWeightedSum: {
        Tensor& gx = touch(n.inputs[0]);
        double gs = g.values[0];
        for (std::size_t t = 0; t < n.entries->size(); ++t) gx.values[n.entries->idx[t]] += gs * n.entries->w[t];
        break;
      }
      case Op::ReduceSum: {
        Tensor& gx = touch(n.inputs[0]);
        double gs = g.values[0];
        for (double& v : gx.values) v += gs;
        break;
      }
      case Op::ReduceMean: {
        Tensor& gx = touch(n.inputs[0]);
        double gs = g.values[0] / static_cast<double>(gx.numel());
        for (double& v : gx.values) v += gs;
        break;
      }
      case Op::Reshape: {
        Tensor& gx = touch(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) gx.values[i] += g.values[i];
        break;
      }
    }
  }

  std::unordered_map<NodeId, Tensor> out;
  for (NodeId id = 0; id < nodes_.size(); ++id)
    if (has[id] && nodes_[id].op == Op::Leaf) out.emplace(id, std::move(grad[id]));
  return out;
}

bool Graph::detach_on_path(NodeId leaf, NodeId root) const {
  if (leaf >= nodes_.size() || root >= nodes_.size()) throw std::invalid_argument("graph: node id out of range");
  std::vector<bool> from_leaf(nodes_.size(), false);
  from_leaf[leaf] = true;
  for (NodeId id = leaf + 1; id < nodes_.size(); ++id)
    for (NodeId in : nodes_[id].inputs)
      if (from_leaf[in]) {
        from_leaf[id] = true;
        break;
      }
  std::vector<bool> to_root(nodes_.size(), false);
  to_root[root] = true;
  for (NodeId id = root + 1; id-- > 0;)
    if (to_root[id])
      for (NodeId in : nodes_[id].inputs) to_root[in] = true;
  for (NodeId id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].op == Op::Detach && from_leaf[id] && to_root[id]) return true;
  return false;
}

double grad_check(const GraphFn& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  Graph g;
  NodeId x = g.leaf(point);
  NodeId root = f(g, x);
  if (g.value(root).numel() != 1)
    throw std::invalid_argument("grad_check: function must produce a scalar, got shape " + shape_str(g.value(root).shape));
  if (g.detach_on_path(x, root))
    throw std::invalid_argument("grad_check: function routes the checked input through detach; finite differences do not apply");

  auto grads = g.backward(root);
  Tensor analytic = grads.count(x) ? grads.at(x) : Tensor::zeros(point.shape);

  auto eval = [&](const Tensor& p) {
    Graph h;
    NodeId px = h.leaf(p);
    NodeId r = f(h, px);
    return h.value(r).scalar_value();
  };

  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    probe.values[i] = point.values[i] + step;
    double up = eval(probe);
    probe.values[i] = point.values[i] - step;
    double down = eval(probe);
    probe.values[i] = point.values[i];
    double fd = (up - down) / (2.0 * step);
    double a = analytic.values[i];
    double err = std::fabs(a - fd) / std::max(1.0, std::fabs(a));
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace adaprl
