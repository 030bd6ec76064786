#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaprl/data.hpp"
#include "adaprl/train.hpp"

namespace adaprl {

// Malformed run config; `key` is the dotted path of the offending entry.
struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(const std::string& key_, const std::string& detail)
      : std::runtime_error("config key '" + key_ + "': " + detail), key(key_) {}
};

struct CsvSource {
  std::string path;
  Schema schema;
};

struct SynthSource {
  std::size_t rows = 0;
  std::size_t numeric_features = 4;
};

enum class SweepKind { Alpha, Sparsity, Noise, Corruption, Fraction };
// The config-file spelling ("alpha", "sparsity", ...).
const char* sweep_kind_name(SweepKind kind);
// The parameter column name in sweep CSVs ("alpha", "keep_fraction", ...).
const char* sweep_param_name(SweepKind kind);

struct SweepSpec {
  SweepKind kind = SweepKind::Alpha;
  std::vector<double> values;  // grid points; integral levels for noise/corruption
  std::size_t repeats = 5;
};

// One experiment: a dataset source, split fractions, the model and training
// hyperparameters, and optionally a sweep grid. Exactly one of csv/synthetic
// is set. Every random choice anywhere downstream derives from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  std::optional<CsvSource> csv;
  std::optional<SynthSource> synthetic;
  double f_train = 0.8, f_valid = 0.1, f_test = 0.1;
  std::vector<std::size_t> hidden = {32, 16};
  std::size_t embedding_dim = 4;
  TrainConfig train;
  std::optional<SweepSpec> sweep;
};

// Strict JSON parser: missing required keys, wrong types, out-of-range
// values, and unrecognized keys all raise ConfigError naming the key.
// Required: "dataset" with exactly one source, and "train" with
// learning_rate, epochs, and batch_size.
RunConfig parse_run_config(const std::string& text);
// Reads the file and parses it; file-level problems use the key "<config>".
RunConfig load_run_config(const std::string& path);

// Stable serialization of the resolved config (defaults filled in, keys
// sorted); equal configs produce equal strings.
std::string canonical_json(const RunConfig& config);

}  // namespace adaprl
