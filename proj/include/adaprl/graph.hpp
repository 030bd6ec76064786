#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "adaprl/tensor.hpp"

namespace adaprl {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Exp,
  Log,
  Sqrt,
  Abs,
  Square,
  Softplus,
  Relu,
  OuterDiff,
  PairDiff,
  MaskedWeightedSum,
  ReduceSum,
  ReduceMean,
  Scale,
  Clamp,
  Detach,
  Reshape,
};

const char* op_name(Op op);

// Constant index-pair list for PairDiff: out[t] = x[a[t]] - x[b[t]] over the
// flat row-major values of x.
struct PairList {
  std::vector<std::uint32_t> a, b;
  std::size_t size() const { return a.size(); }
};

// Compiled form of a masked weighted sum: only entries whose mask is 1 are
// kept, so evaluation and backprop cost O(#kept) instead of O(numel).
struct WeightedIndexList {
  std::vector<std::uint32_t> idx;
  std::vector<double> w;
  std::size_t size() const { return idx.size(); }
};

struct Node {
  Op op = Op::Leaf;
  std::vector<NodeId> inputs;
  Tensor value;
  double c0 = 0.0, c1 = 0.0;  // Scale factor; Clamp low/high
  std::shared_ptr<const PairList> pairs;
  std::shared_ptr<const WeightedIndexList> entries;
};

// Append-only computation record over dense tensors. Values are computed
// eagerly on construction; backward() is a pure function of the record.
class Graph {
 public:
  NodeId leaf(Tensor t);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);

  NodeId exp(NodeId x);
  NodeId log(NodeId x);
  NodeId sqrt(NodeId x);
  NodeId abs(NodeId x);
  NodeId square(NodeId x);
  NodeId softplus(NodeId x);
  NodeId relu(NodeId x);

  // v (flattened, n values) -> n x n matrix with entry (i,j) = v_i - v_j.
  NodeId outer_diff(NodeId v);
  // Sparse counterpart: differences only for an explicit constant pair list.
  NodeId pair_diff(NodeId v, PairList pairs);
  NodeId pair_diff(NodeId v, std::shared_ptr<const PairList> pairs);
  // Scalar sum of mask*weights*x; mask and weights are constants, mask must be
  // exactly 0/1 valued and both must match x's shape.
  NodeId masked_weighted_sum(NodeId x, const Tensor& mask, const Tensor& weights);
  NodeId masked_weighted_sum(NodeId x, std::shared_ptr<const WeightedIndexList> entries);

  NodeId reduce_sum(NodeId x);
  NodeId reduce_mean(NodeId x);
  NodeId scale(NodeId x, double factor);
  NodeId clamp(NodeId x, double lo, double hi);
  // Identity forward; propagates a zero gradient.
  NodeId detach(NodeId x);
  // Metadata-only view with identical flat values; element count must match.
  NodeId reshape(NodeId x, std::vector<std::size_t> shape);

  const Tensor& value(NodeId id) const { return node(id).value; }
  const Node& node(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse-mode gradients of a scalar root: returns a gradient tensor for
  // every leaf the backward sweep reaches (zeros included, e.g. behind detach).
  std::unordered_map<NodeId, Tensor> backward(NodeId root) const;

  // True when some path from `leaf` to `root` passes through a Detach node,
  // i.e. finite differences and backward() would legitimately disagree.
  bool detach_on_path(NodeId leaf, NodeId root) const;

 private:
  NodeId push(Node n);
  NodeId unary(Op op, NodeId x);
  NodeId binary(Op op, NodeId a, NodeId b);
  std::vector<Node> nodes_;
};

// Builds f's graph at `point`, compares analytic gradients against central
// finite differences, and returns the worst relative error
// max_i |analytic_i - fd_i| / max(1, |analytic_i|).
// Rejects functions that route `point` through a Detach node.
using GraphFn = std::function<NodeId(Graph&, NodeId)>;
double grad_check(const GraphFn& f, const Tensor& point, double step);

}  // namespace adaprl
