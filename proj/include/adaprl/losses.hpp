#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "adaprl/graph.hpp"

namespace adaprl {

enum class PairType { MAE, RMSE };
enum class RegKind { L2, L1, Huber };
enum class LossMode { Single, MultiTask, TimeSeries };

struct LossSpec {
  double alpha = 0.0;          // weight of the pairwise term in the main loss
  double theta = 0.0;          // hinge threshold on target differences
  PairType pair_type = PairType::MAE;
  RegKind reg_kind = RegKind::L2;
  double huber_delta = 1.0;
  LossMode mode = LossMode::Single;
  double keep_fraction = 1.0;  // Bernoulli keep probability for sparse pair subsampling
};

// Mean pointwise regression loss over all entries; pred and target must have
// identical, non-empty shapes.
NodeId pointwise_loss(Graph& g, NodeId pred, const Tensor& target, RegKind kind, double huber_delta = 1.0);

// [B] targets -> [B,B] 0/1 matrix with entry (i,j) = 1 iff y_i - y_j > theta
// (strictly; ties at exactly theta are excluded).
Tensor hinge_mask(const Tensor& targets, double theta);
// Number of 1 entries of a 0/1 mask.
std::size_t pair_count(const Tensor& mask);

// Pairwise ranking loss: mean (MAE) or root-mean (RMSE) of the deviation
// between prediction differences and target differences over mask-true pairs.
// Zero (with zero gradient) when the mask selects no pairs.
NodeId prl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& mask, PairType type);

// U(i,j) = sigma2_i + sigma2_j; every sigma2 must be strictly positive.
Tensor uncertainty_matrix(const Tensor& sigma2);
// C = 2 * (max(U) - U) / (max(U) - min(U)), elementwise in [0, 2]; a
// degenerate matrix (max == min) maps to all ones.
Tensor confidence_matrix(const Tensor& uncertainty);

// Confidence-weighted pairwise loss; `confidence` enters as constant weights,
// so no gradient flows toward the uncertainty estimates.
NodeId cprl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& mask, const Tensor& confidence,
                 PairType type);

// Gaussian negative log-likelihood, mean over entries:
// (y - mu)^2 / (2 sigma2) + log(sigma2) / 2.
NodeId nll_loss(Graph& g, NodeId mu, NodeId sigma2, const Tensor& target);

// Multi-target variant on [B,N]: pairs are formed within each target column,
// normalized by the total pair count across columns.
NodeId mcprl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& sigma2, const LossSpec& spec);

// Forecasting variant on [B,T,N]: the B*T rows of each variate are flattened
// into one comparison pool per variate.
NodeId mtcprl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& sigma2, const LossSpec& spec);

// Sparse variant of mtcprl: candidate (i,j) pairs are kept independently with
// probability spec.keep_fraction, deterministically from mask_seed. Cost is
// proportional to the kept set; keep_fraction = 1 reproduces mtcprl exactly.
NodeId scprl_loss(Graph& g, NodeId pred, const Tensor& target, const Tensor& sigma2, const LossSpec& spec,
                  std::uint64_t mask_seed);

// Keep-list over the m*m ordered candidate pairs in row-major order, sampled
// by geometric gap skipping so the cost is O(p * m^2 + 1).
std::vector<std::pair<std::uint32_t, std::uint32_t>> sample_keep_pairs(std::size_t m, double p, std::uint64_t seed);

// Combined objective: main = pointwise + alpha * pairwise (mode-dependent),
// aux = Gaussian NLL for (mu, sigma2). Confidence weights are computed from
// sigma2's values only; the main term carries no gradient into mu/sigma2.
// mask_seed is consumed only when spec.keep_fraction < 1.
struct AdaprlParts {
  NodeId main;
  NodeId aux;
};
AdaprlParts adaprl_loss(Graph& g, NodeId pred, const Tensor& target, NodeId mu, NodeId sigma2, const LossSpec& spec,
                        std::uint64_t mask_seed = 0);

}  // namespace adaprl
