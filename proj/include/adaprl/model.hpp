#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaprl/data.hpp"
#include "adaprl/graph.hpp"
#include "adaprl/tensor.hpp"

namespace adaprl {

struct MlpConfig {
  std::size_t numeric = 0;                // numeric feature count
  std::vector<std::size_t> vocab_sizes;   // one per categorical column
  std::size_t embedding_dim = 4;
  std::vector<std::size_t> hidden;        // hidden widths; empty means affine
  std::size_t outputs = 1;                // d_t

  bool operator==(const MlpConfig&) const = default;
  void validate() const;
  std::size_t input_width() const { return numeric + vocab_sizes.size() * embedding_dim; }
};

struct ParamDesc {
  std::string name;
  std::vector<std::size_t> shape;
};
// Parameter order: embedding tables, first-layer weight blocks (numeric then
// one per categorical) and bias, then weight/bias per remaining layer.
std::vector<ParamDesc> param_layout(const MlpConfig& config);

// One network: config plus flat parameter tensors in param_layout order.
struct Mlp {
  MlpConfig config;
  std::vector<Tensor> params;
};

// The trained pair: a point-estimate network and an uncertainty network with
// the same backbone but 2*d_t outputs (per-target mean and raw log-variance).
// They never share storage, so updating one cannot disturb the other.
struct ModelPair {
  Mlp main;
  Mlp aux;
  std::vector<std::string> cat_names;  // labels for error messages

  static ModelPair init(const MlpConfig& config, std::uint64_t seed, std::vector<std::string> cat_names = {});
};

struct MainForward {
  NodeId pred;                  // [B, d_t]
  std::vector<NodeId> params;   // leaf ids aligned with Mlp::params
};
struct AuxForward {
  NodeId mu;      // [B, d_t]
  NodeId sigma2;  // [B, d_t], exp(clamp(raw, -10, 10)) so always positive
  std::vector<NodeId> params;
};

MainForward forward_main(Graph& g, const ModelPair& pair, const Batch& batch);
AuxForward forward_aux(Graph& g, const ModelPair& pair, const Batch& batch);

// Checkpoint file: 8-byte little-endian header length, JSON header (config,
// schema, vocabularies, tensor offsets), then all parameters as 64-bit
// little-endian reals.
struct Checkpoint {
  ModelPair pair;
  Schema schema;                                  // input schema for encoding CSV rows
  std::vector<std::vector<std::string>> vocabs;   // per categorical column, schema order
};
void save_checkpoint(const std::string& path, const ModelPair& pair, const Schema& schema,
                     const std::vector<std::vector<std::string>>& vocabs);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace adaprl
