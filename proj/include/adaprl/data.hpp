#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adaprl/tensor.hpp"

namespace adaprl {

enum class ColumnKind { Numeric, Categorical, Target, Weight };

const char* column_kind_name(ColumnKind kind);
ColumnKind column_kind_from_name(const std::string& name);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;

  bool operator==(const ColumnSpec&) const = default;
};
using Schema = std::vector<ColumnSpec>;

// Column-major storage: numeric/target/weight columns hold doubles,
// categorical columns hold codes into their vocabulary.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<double> reals;
  std::vector<std::uint32_t> codes;
  std::vector<std::string> vocab;

  bool operator==(const Column&) const = default;
};

struct Dataset {
  std::vector<Column> columns;
  std::size_t rows = 0;

  bool operator==(const Dataset&) const = default;

  std::size_t column_index(const std::string& name) const;  // throws if absent
  const Column& column(const std::string& name) const;
  std::vector<std::size_t> feature_indices() const;  // numeric + categorical
  std::vector<std::size_t> target_indices() const;
  std::optional<std::size_t> weight_index() const;
  Schema schema() const;

  // Checks per-column lengths, categorical codes against vocabularies, and
  // that at least one target column exists.
  void validate() const;

  Dataset select_rows(const std::vector<std::size_t>& idx) const;
};

// Row slice in model-ready layout: numeric features as a [B, n_num] matrix,
// one code vector per categorical column, targets as [B, n_target].
struct Batch {
  Tensor numeric;
  std::vector<std::vector<std::uint32_t>> categorical;
  Tensor targets;
  std::vector<double> weights;  // empty when the schema has no weight column
};
Batch gather_rows(const Dataset& ds, const std::vector<std::size_t>& idx);

// Strict CSV reader: comma-separated, first row must equal the schema names,
// '.' decimal point, no quoting. Categorical vocabularies are built in row
// order unless `fixed_vocabs` pins them, in which case unseen tokens are
// errors (used when encoding new data against a stored model).
Dataset load_csv(const std::string& path, const Schema& schema);
Dataset load_csv(const std::string& path, const Schema& schema,
                 const std::vector<std::pair<std::string, std::vector<std::string>>>& fixed_vocabs);
// Same reader for inference inputs: the schema may consist of feature
// columns only (no target required).
Dataset load_csv_features(const std::string& path, const Schema& schema,
                          const std::vector<std::pair<std::string, std::vector<std::string>>>& fixed_vocabs);

struct Splits {
  Dataset train, valid, test;
};
// Seeded permutation, then a contiguous cut. Valid/test sizes are floors of
// their fractions; the remainder goes to train.
Splits split_random(const Dataset& ds, double f_train, double f_valid, double f_test, std::uint64_t seed);

struct NoiseSpec {
  unsigned level = 0;  // noise std is 0.2 * level * std(y)
  std::uint64_t seed = 0;
};
// Adds seeded Gaussian noise to every target column; std(y) is the population
// standard deviation of the pre-noise column. level=0 returns a bit-identical
// copy. Intended for training splits only.
Dataset inject_label_noise(const Dataset& ds, const NoiseSpec& spec);

struct CorruptionSpec {
  double column_fraction = 0.2;
  unsigned level = 0;  // selects 10*level percent of rows
  std::uint64_t seed = 0;
};
// Picks ceil(column_fraction * feature columns) columns — the choice depends
// on the seed but not on the level, so sweeps over levels corrupt the same
// columns — then shuffles each chosen column's values within a seeded row
// subset of each dataset. Training data is never passed through this.
std::pair<Dataset, Dataset> corrupt_columns(const Dataset& valid, const Dataset& test, const CorruptionSpec& spec);

// Seeded sample without replacement of ceil(fraction * rows) rows, keeping
// the surviving rows in their original order. fraction=1 is the identity.
Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed);

struct SynthData {
  Dataset data;
  // Ground truth per row, kept outside the dataset so training never sees it.
  std::vector<double> f_star;
  std::vector<double> sigma_star;
};
// x ~ uniform(-1,1)^d with y = f*(x) + sigma*(x) * eps. f* is a fixed seeded
// two-layer tanh network; sigma* = 0.1 * 10^((x1+1)/2) spans exactly a 10x
// range across the input space. suppress_noise makes y == f*(x) exactly.
SynthData synth_heteroscedastic(std::size_t n, std::size_t d_numeric, std::uint64_t seed,
                                bool suppress_noise = false);

// Equal-frequency binning fit on one split (training) and applied anywhere.
struct QuantileBinner {
  std::vector<double> edges;  // ascending interior edges, bins-1 of them

  static QuantileBinner fit(std::vector<double> values, std::size_t bins = 16);
  std::uint32_t bin(double v) const;  // number of edges <= v
  std::size_t bins() const { return edges.size() + 1; }
};
// Replaces a numeric column with a categorical one using the binner's edges;
// the vocabulary is bin0..binN-1 regardless of which bins are populated.
Dataset bin_column(const Dataset& ds, const std::string& name, const QuantileBinner& binner);

}  // namespace adaprl
