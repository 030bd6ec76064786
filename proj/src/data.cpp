#include "adaprl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "adaprl/rng.hpp"

namespace adaprl {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double population_std(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

bool holds_reals(ColumnKind kind) { return kind != ColumnKind::Categorical; }

}  // namespace

const char* column_kind_name(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Target: return "target";
    case ColumnKind::Weight: return "weight";
  }
  return "?";
}

ColumnKind column_kind_from_name(const std::string& name) {
  if (name == "numeric") return ColumnKind::Numeric;
  if (name == "categorical") return ColumnKind::Categorical;
  if (name == "target") return ColumnKind::Target;
  if (name == "weight") return ColumnKind::Weight;
  fail("unknown column kind '" + name + "' (expected numeric, categorical, target, or weight)");
}

std::size_t Dataset::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  fail("dataset has no column named '" + name + "'");
}

const Column& Dataset::column(const std::string& name) const { return columns[column_index(name)]; }

std::vector<std::size_t> Dataset::feature_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].kind == ColumnKind::Numeric || columns[i].kind == ColumnKind::Categorical) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::target_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].kind == ColumnKind::Target) out.push_back(i);
  return out;
}

std::optional<std::size_t> Dataset::weight_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].kind == ColumnKind::Weight) return i;
  return std::nullopt;
}

Schema Dataset::schema() const {
  Schema s;
  for (const Column& c : columns) s.push_back({c.name, c.kind});
  return s;
}

namespace {

void check_columns(const Dataset& ds) {
  for (const Column& c : ds.columns) {
    if (holds_reals(c.kind)) {
      if (c.reals.size() != ds.rows)
        fail("column '" + c.name + "' has " + std::to_string(c.reals.size()) + " values, expected " +
             std::to_string(ds.rows));
    } else {
      if (c.codes.size() != ds.rows)
        fail("column '" + c.name + "' has " + std::to_string(c.codes.size()) + " values, expected " +
             std::to_string(ds.rows));
      for (std::uint32_t code : c.codes)
        if (code >= c.vocab.size())
          fail("column '" + c.name + "' has code " + std::to_string(code) + " outside its vocabulary of size " +
               std::to_string(c.vocab.size()));
    }
  }
}

}  // namespace

void Dataset::validate() const {
  check_columns(*this);
  if (target_indices().empty()) fail("dataset has no target column");
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& idx) const {
  for (std::size_t r : idx)
    if (r >= rows) fail("select_rows: row index " + std::to_string(r) + " out of range for " + std::to_string(rows));
  Dataset out;
  out.rows = idx.size();
  out.columns.reserve(columns.size());
  for (const Column& c : columns) {
    Column nc;
    nc.name = c.name;
    nc.kind = c.kind;
    nc.vocab = c.vocab;
    if (holds_reals(c.kind)) {
      nc.reals.reserve(idx.size());
      for (std::size_t r : idx) nc.reals.push_back(c.reals[r]);
    } else {
      nc.codes.reserve(idx.size());
      for (std::size_t r : idx) nc.codes.push_back(c.codes[r]);
    }
    out.columns.push_back(std::move(nc));
  }
  return out;
}

Batch gather_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
  for (std::size_t r : idx)
    if (r >= ds.rows) fail("gather_rows: row index " + std::to_string(r) + " out of range for " + std::to_string(ds.rows));
  std::vector<std::size_t> num_cols, cat_cols, tgt_cols;
  for (std::size_t i = 0; i < ds.columns.size(); ++i) {
    switch (ds.columns[i].kind) {
      case ColumnKind::Numeric: num_cols.push_back(i); break;
      case ColumnKind::Categorical: cat_cols.push_back(i); break;
      case ColumnKind::Target: tgt_cols.push_back(i); break;
      case ColumnKind::Weight: break;
    }
  }
  const std::size_t b = idx.size();
  Batch out;
  out.numeric = Tensor::zeros({b, num_cols.size()});
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < num_cols.size(); ++j)
      out.numeric.values[r * num_cols.size() + j] = ds.columns[num_cols[j]].reals[idx[r]];
  out.categorical.resize(cat_cols.size());
  for (std::size_t j = 0; j < cat_cols.size(); ++j) {
    out.categorical[j].reserve(b);
    for (std::size_t r : idx) out.categorical[j].push_back(ds.columns[cat_cols[j]].codes[r]);
  }
  out.targets = Tensor::zeros({b, tgt_cols.size()});
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < tgt_cols.size(); ++j)
      out.targets.values[r * tgt_cols.size() + j] = ds.columns[tgt_cols[j]].reals[idx[r]];
  if (auto w = ds.weight_index()) {
    out.weights.reserve(b);
    for (std::size_t r : idx) out.weights.push_back(ds.columns[*w].reals[r]);
  }
  return out;
}

namespace {

Dataset load_csv_impl(const std::string& path, const Schema& schema,
                      const std::vector<std::pair<std::string, std::vector<std::string>>>& fixed_vocabs,
                      bool require_target);

}  // namespace

Dataset load_csv(const std::string& path, const Schema& schema) { return load_csv_impl(path, schema, {}, true); }

Dataset load_csv(const std::string& path, const Schema& schema,
                 const std::vector<std::pair<std::string, std::vector<std::string>>>& fixed_vocabs) {
  return load_csv_impl(path, schema, fixed_vocabs, true);
}

Dataset load_csv_features(const std::string& path, const Schema& schema,
                          const std::vector<std::pair<std::string, std::vector<std::string>>>& fixed_vocabs) {
  return load_csv_impl(path, schema, fixed_vocabs, false);
}

namespace {

Dataset load_csv_impl(const std::string& path, const Schema& schema,
                      const std::vector<std::pair<std::string, std::vector<std::string>>>& fixed_vocabs,
                      bool require_target) {
  if (schema.empty()) fail("load_csv: schema is empty");
  {
    std::unordered_set<std::string> seen;
    for (const ColumnSpec& c : schema)
      if (!seen.insert(c.name).second) fail("load_csv: duplicate column '" + c.name + "' in schema");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_csv: cannot open file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (content.empty()) throw std::runtime_error("load_csv: file is empty: " + path);

  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : content) {
      if (c == '\n') {
        if (!cur.empty() && cur.back() == '\r') cur.pop_back();
        lines.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) {
      if (cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
    }
  }
  if (lines.empty()) throw std::runtime_error("load_csv: file is empty: " + path);

  std::string expected_header;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i) expected_header += ',';
    expected_header += schema[i].name;
  }
  if (lines[0] != expected_header)
    fail("load_csv: header mismatch: expected '" + expected_header + "' got '" + lines[0] + "'");
  if (lines.size() == 1) throw std::runtime_error("load_csv: no data rows: " + path);

  Dataset ds;
  ds.rows = lines.size() - 1;
  ds.columns.resize(schema.size());
  std::vector<std::unordered_map<std::string, std::uint32_t>> lookup(schema.size());
  std::vector<bool> pinned(schema.size(), false);
  for (std::size_t i = 0; i < schema.size(); ++i) {
    ds.columns[i].name = schema[i].name;
    ds.columns[i].kind = schema[i].kind;
    if (schema[i].kind == ColumnKind::Categorical) {
      for (const auto& [name, vocab] : fixed_vocabs) {
        if (name != schema[i].name) continue;
        pinned[i] = true;
        ds.columns[i].vocab = vocab;
        for (std::uint32_t code = 0; code < vocab.size(); ++code) lookup[i][vocab[code]] = code;
      }
    }
  }

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row = li;  // 1-based data row, header excluded
    std::vector<std::string> cells = split_line(lines[li]);
    if (cells.size() != schema.size())
      fail("load_csv: row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " +
           std::to_string(schema.size()));
    for (std::size_t c = 0; c < schema.size(); ++c) {
      Column& col = ds.columns[c];
      if (col.kind == ColumnKind::Categorical) {
        auto it = lookup[c].find(cells[c]);
        if (it != lookup[c].end()) {
          col.codes.push_back(it->second);
        } else if (pinned[c]) {
          fail("load_csv: unknown category '" + cells[c] + "' (row " + std::to_string(row) + ", column " + col.name +
               ")");
        } else {
          auto code = static_cast<std::uint32_t>(col.vocab.size());
          col.vocab.push_back(cells[c]);
          lookup[c].emplace(cells[c], code);
          col.codes.push_back(code);
        }
      } else {
        const std::string& cell = cells[c];
        const char* begin = cell.c_str();
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (cell.empty() || end != begin + cell.size() || !std::isfinite(v))
          fail("load_csv: cannot parse cell '" + cell + "' as a number (row " + std::to_string(row) + ", column " +
               col.name + ")");
        col.reals.push_back(v);
      }
    }
  }
  if (require_target)
    ds.validate();
  else
    check_columns(ds);
  return ds;
}

}  // namespace

Splits split_random(const Dataset& ds, double f_train, double f_valid, double f_test, std::uint64_t seed) {
  if (!(f_train > 0) || !(f_valid > 0) || !(f_test > 0))
    fail("split_random: all fractions must be positive, got (" + std::to_string(f_train) + ", " +
         std::to_string(f_valid) + ", " + std::to_string(f_test) + ")");
  if (std::fabs(f_train + f_valid + f_test - 1.0) > 1e-9)
    fail("split_random: fractions must sum to 1, got " + std::to_string(f_train + f_valid + f_test));
  if (ds.rows < 3) fail("split_random: need at least 3 rows, got " + std::to_string(ds.rows));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm = shuffled_indices(ds.rows, rng);
  const auto n_valid = static_cast<std::size_t>(std::floor(f_valid * static_cast<double>(ds.rows)));
  const auto n_test = static_cast<std::size_t>(std::floor(f_test * static_cast<double>(ds.rows)));
  const std::size_t n_train = ds.rows - n_valid - n_test;

  auto take = [&](std::size_t begin, std::size_t count) {
    return ds.select_rows({perm.begin() + static_cast<std::ptrdiff_t>(begin),
                           perm.begin() + static_cast<std::ptrdiff_t>(begin + count)});
  };
  return Splits{take(0, n_train), take(n_train, n_valid), take(n_train + n_valid, n_test)};
}

Dataset inject_label_noise(const Dataset& ds, const NoiseSpec& spec) {
  Dataset out = ds;
  if (spec.level == 0) return out;
  for (std::size_t i = 0; i < out.columns.size(); ++i) {
    Column& c = out.columns[i];
    if (c.kind != ColumnKind::Target || c.reals.empty()) continue;
    const double sd = 0.2 * static_cast<double>(spec.level) * population_std(c.reals);
    std::mt19937_64 rng(mix_seed(spec.seed, i));
    for (double& y : c.reals) y += sd * normal(rng);
  }
  return out;
}

namespace {

// Shuffles `col` in place among a seeded subset of rows. The subset is the
// first `selected` entries of a level-independent row permutation, so higher
// levels extend lower levels' selections.
void shuffle_within_rows(Column& col, std::size_t rows, std::size_t selected, std::mt19937_64& rng) {
  std::vector<std::size_t> order = shuffled_indices(rows, rng);
  order.resize(selected);
  if (col.kind == ColumnKind::Categorical) {
    std::vector<std::uint32_t> vals;
    vals.reserve(selected);
    for (std::size_t r : order) vals.push_back(col.codes[r]);
    fisher_yates(vals, rng);
    for (std::size_t i = 0; i < selected; ++i) col.codes[order[i]] = vals[i];
  } else {
    std::vector<double> vals;
    vals.reserve(selected);
    for (std::size_t r : order) vals.push_back(col.reals[r]);
    fisher_yates(vals, rng);
    for (std::size_t i = 0; i < selected; ++i) col.reals[order[i]] = vals[i];
  }
}

}  // namespace

std::pair<Dataset, Dataset> corrupt_columns(const Dataset& valid, const Dataset& test, const CorruptionSpec& spec) {
  if (spec.column_fraction < 0 || spec.column_fraction > 1)
    fail("corrupt_columns: column_fraction must lie in [0,1], got " + std::to_string(spec.column_fraction));
  if (spec.level > 10) fail("corrupt_columns: level must be at most 10, got " + std::to_string(spec.level));
  if (valid.schema() != test.schema()) fail("corrupt_columns: valid and test schemas differ");

  std::pair<Dataset, Dataset> out{valid, test};
  if (spec.level == 0) return out;

  // The column choice is seeded but level-independent, so a sweep over levels
  // corrupts the same columns at increasing row fractions.
  std::vector<std::size_t> features = valid.feature_indices();
  const auto n_cols =
      static_cast<std::size_t>(std::ceil(spec.column_fraction * static_cast<double>(features.size())));
  std::mt19937_64 col_rng(mix_seed(spec.seed, 0));
  fisher_yates(features, col_rng);
  features.resize(std::min(n_cols, features.size()));

  auto corrupt = [&](Dataset& ds, std::uint64_t tag) {
    const std::size_t selected = ds.rows * spec.level / 10;
    for (std::size_t ci : features) {
      std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, tag), ci + 1));
      shuffle_within_rows(ds.columns[ci], ds.rows, selected, rng);
    }
  };
  corrupt(out.first, 1);
  corrupt(out.second, 2);
  return out;
}

Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0) || fraction > 1)
    fail("subsample: fraction must lie in (0,1], got " + std::to_string(fraction));
  if (fraction == 1.0) return ds;
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ds.rows)));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx = shuffled_indices(ds.rows, rng);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());  // keep surviving rows in original order
  return ds.select_rows(idx);
}

SynthData synth_heteroscedastic(std::size_t n, std::size_t d_numeric, std::uint64_t seed, bool suppress_noise) {
  if (n < 1) fail("synth_heteroscedastic: need at least 1 row");
  if (d_numeric < 1) fail("synth_heteroscedastic: need at least 1 numeric feature");

  SynthData out;
  out.data.rows = n;
  out.data.columns.resize(d_numeric + 1);
  for (std::size_t j = 0; j < d_numeric; ++j) {
    out.data.columns[j].name = "x" + std::to_string(j + 1);
    out.data.columns[j].kind = ColumnKind::Numeric;
    out.data.columns[j].reals.resize(n);
  }
  Column& y = out.data.columns[d_numeric];
  y.name = "y";
  y.kind = ColumnKind::Target;
  y.reals.resize(n);

  std::mt19937_64 x_rng(mix_seed(seed, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d_numeric; ++j) out.data.columns[j].reals[i] = uniform(x_rng, -1.0, 1.0);

  constexpr std::size_t kHidden = 8;
  std::mt19937_64 f_rng(mix_seed(seed, 1));
  std::vector<double> w1(kHidden * d_numeric), b1(kHidden), w2(kHidden);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d_numeric));
  for (double& w : w1) w = s1 * normal(f_rng);
  for (double& b : b1) b = uniform(f_rng, -0.5, 0.5);
  const double s2 = 2.0 / std::sqrt(static_cast<double>(kHidden));
  for (double& w : w2) w = s2 * normal(f_rng);

  out.f_star.resize(n);
  out.sigma_star.resize(n);
  std::mt19937_64 eps_rng(mix_seed(seed, 2));
  for (std::size_t i = 0; i < n; ++i) {
    double f = 0;
    for (std::size_t h = 0; h < kHidden; ++h) {
      double pre = b1[h];
      for (std::size_t j = 0; j < d_numeric; ++j) pre += w1[h * d_numeric + j] * out.data.columns[j].reals[i];
      f += w2[h] * std::tanh(pre);
    }
    out.f_star[i] = f;
    const double x1 = out.data.columns[0].reals[i];
    out.sigma_star[i] = 0.1 * std::pow(10.0, (x1 + 1.0) / 2.0);
    y.reals[i] = suppress_noise ? f : f + out.sigma_star[i] * normal(eps_rng);
  }
  out.data.validate();
  return out;
}

QuantileBinner QuantileBinner::fit(std::vector<double> values, std::size_t bins) {
  if (values.empty()) fail("QuantileBinner: cannot fit on an empty column");
  if (bins < 2) fail("QuantileBinner: need at least 2 bins, got " + std::to_string(bins));
  std::sort(values.begin(), values.end());
  QuantileBinner qb;
  qb.edges.reserve(bins - 1);
  for (std::size_t i = 1; i < bins; ++i) {
    std::size_t rank = i * values.size() / bins;
    qb.edges.push_back(values[std::min(rank, values.size() - 1)]);
  }
  return qb;
}

std::uint32_t QuantileBinner::bin(double v) const {
  std::uint32_t b = 0;
  for (double e : edges)
    if (v >= e) ++b;
  return b;
}

Dataset bin_column(const Dataset& ds, const std::string& name, const QuantileBinner& binner) {
  Dataset out = ds;
  Column& col = out.columns[out.column_index(name)];
  if (col.kind != ColumnKind::Numeric)
    fail("bin_column: column '" + name + "' is " + column_kind_name(col.kind) + ", expected numeric");
  col.kind = ColumnKind::Categorical;
  col.codes.reserve(col.reals.size());
  for (double v : col.reals) col.codes.push_back(binner.bin(v));
  col.reals.clear();
  col.vocab.clear();
  for (std::size_t b = 0; b < binner.bins(); ++b) col.vocab.push_back("bin" + std::to_string(b));
  return out;
}

}  // namespace adaprl
