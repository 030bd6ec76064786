#include "adaprl/run_config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace adaprl {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& key, const std::string& detail) { throw ConfigError(key, detail); }

std::string item_key(const std::string& path, const std::string& name) {
  return path.empty() ? name : path + "." + name;
}

const json& need(const json& obj, const std::string& path, const std::string& name) {
  auto it = obj.find(name);
  if (it == obj.end()) bad(item_key(path, name), "required key is missing");
  return *it;
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* name : allowed)
      if (item.key() == name) ok = true;
    if (!ok) bad(item_key(path, item.key()), "unrecognized key");
  }
}

const json& as_object(const json& v, const std::string& key) {
  if (!v.is_object()) bad(key, "expected an object");
  return v;
}

double as_number(const json& v, const std::string& key) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

std::uint64_t as_uint(const json& v, const std::string& key) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) bad(key, "expected a non-negative integer");
  if (v.is_number_integer() && v.get<std::int64_t>() < 0) bad(key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) bad(key, "expected a string");
  return v.get<std::string>();
}

// Convenience: fetch-if-present with a default.
double opt_number(const json& obj, const std::string& path, const std::string& name, double fallback) {
  auto it = obj.find(name);
  return it == obj.end() ? fallback : as_number(*it, item_key(path, name));
}

std::uint64_t opt_uint(const json& obj, const std::string& path, const std::string& name, std::uint64_t fallback) {
  auto it = obj.find(name);
  return it == obj.end() ? fallback : as_uint(*it, item_key(path, name));
}

std::string opt_string(const json& obj, const std::string& path, const std::string& name, std::string fallback) {
  auto it = obj.find(name);
  return it == obj.end() ? std::move(fallback) : as_string(*it, item_key(path, name));
}

CsvSource parse_csv(const json& v) {
  const std::string path = "dataset.csv";
  const json& obj = as_object(v, path);
  check_keys(obj, path, {"path", "schema"});
  CsvSource src;
  src.path = as_string(need(obj, path, "path"), path + ".path");
  if (src.path.empty()) bad(path + ".path", "must not be empty");
  const json& schema = need(obj, path, "schema");
  if (!schema.is_array() || schema.empty()) bad(path + ".schema", "expected a non-empty array of columns");
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const std::string col_key = path + ".schema[" + std::to_string(i) + "]";
    const json& col = as_object(schema[i], col_key);
    check_keys(col, col_key, {"name", "kind"});
    ColumnSpec spec;
    spec.name = as_string(need(col, col_key, "name"), col_key + ".name");
    const std::string kind = as_string(need(col, col_key, "kind"), col_key + ".kind");
    try {
      spec.kind = column_kind_from_name(kind);
    } catch (const std::exception&) {
      bad(col_key + ".kind", "unknown column kind '" + kind + "' (expected numeric, categorical, target, or weight)");
    }
    src.schema.push_back(std::move(spec));
  }
  return src;
}

SynthSource parse_synth(const json& v) {
  const std::string path = "dataset.synthetic";
  const json& obj = as_object(v, path);
  check_keys(obj, path, {"rows", "numeric_features"});
  SynthSource src;
  src.rows = as_uint(need(obj, path, "rows"), path + ".rows");
  if (src.rows == 0) bad(path + ".rows", "must be at least 1");
  src.numeric_features = opt_uint(obj, path, "numeric_features", src.numeric_features);
  if (src.numeric_features == 0) bad(path + ".numeric_features", "must be at least 1");
  return src;
}

PairType parse_pair_type(const std::string& s, const std::string& key) {
  if (s == "mae") return PairType::MAE;
  if (s == "rmse") return PairType::RMSE;
  bad(key, "unknown pair type '" + s + "' (expected mae or rmse)");
}

RegKind parse_reg_kind(const std::string& s, const std::string& key) {
  if (s == "l2") return RegKind::L2;
  if (s == "l1") return RegKind::L1;
  if (s == "huber") return RegKind::Huber;
  bad(key, "unknown regression kind '" + s + "' (expected l2, l1, or huber)");
}

LossMode parse_mode(const std::string& s, const std::string& key) {
  if (s == "single") return LossMode::Single;
  if (s == "multi_task") return LossMode::MultiTask;
  if (s == "time_series") return LossMode::TimeSeries;
  bad(key, "unknown mode '" + s + "' (expected single, multi_task, or time_series)");
}

SweepKind parse_sweep_kind(const std::string& s, const std::string& key) {
  if (s == "alpha") return SweepKind::Alpha;
  if (s == "sparsity") return SweepKind::Sparsity;
  if (s == "noise") return SweepKind::Noise;
  if (s == "corruption") return SweepKind::Corruption;
  if (s == "fraction") return SweepKind::Fraction;
  bad(key, "unknown sweep kind '" + s + "' (expected alpha, sparsity, noise, corruption, or fraction)");
}

TrainConfig parse_train(const json& v) {
  const std::string path = "train";
  const json& obj = as_object(v, path);
  check_keys(obj, path,
             {"learning_rate", "epochs", "batch_size", "patience", "alpha", "theta", "pair_type", "reg_kind",
              "huber_delta", "mode", "keep_fraction", "horizon"});
  TrainConfig tc;
  tc.learning_rate = as_number(need(obj, path, "learning_rate"), path + ".learning_rate");
  tc.epochs = as_uint(need(obj, path, "epochs"), path + ".epochs");
  tc.batch_size = as_uint(need(obj, path, "batch_size"), path + ".batch_size");
  tc.patience = opt_uint(obj, path, "patience", tc.patience);
  tc.horizon = opt_uint(obj, path, "horizon", tc.horizon);
  tc.loss.alpha = opt_number(obj, path, "alpha", tc.loss.alpha);
  tc.loss.theta = opt_number(obj, path, "theta", tc.loss.theta);
  tc.loss.huber_delta = opt_number(obj, path, "huber_delta", tc.loss.huber_delta);
  tc.loss.keep_fraction = opt_number(obj, path, "keep_fraction", tc.loss.keep_fraction);
  if (auto it = obj.find("pair_type"); it != obj.end())
    tc.loss.pair_type = parse_pair_type(as_string(*it, path + ".pair_type"), path + ".pair_type");
  if (auto it = obj.find("reg_kind"); it != obj.end())
    tc.loss.reg_kind = parse_reg_kind(as_string(*it, path + ".reg_kind"), path + ".reg_kind");
  if (auto it = obj.find("mode"); it != obj.end())
    tc.loss.mode = parse_mode(as_string(*it, path + ".mode"), path + ".mode");
  try {
    tc.validate();
  } catch (const std::exception& e) {
    bad(path, e.what());
  }
  return tc;
}

SweepSpec parse_sweep(const json& v) {
  const std::string path = "sweep";
  const json& obj = as_object(v, path);
  check_keys(obj, path, {"kind", "values", "repeats"});
  SweepSpec sw;
  sw.kind = parse_sweep_kind(as_string(need(obj, path, "kind"), path + ".kind"), path + ".kind");
  const json& values = need(obj, path, "values");
  if (!values.is_array() || values.empty()) bad(path + ".values", "expected a non-empty array of numbers");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string vkey = path + ".values[" + std::to_string(i) + "]";
    const double x = as_number(values[i], vkey);
    switch (sw.kind) {
      case SweepKind::Alpha:
        if (x < 0) bad(vkey, "alpha must be >= 0");
        break;
      case SweepKind::Sparsity:
        if (!(x > 0 && x <= 1)) bad(vkey, "keep fraction must be in (0, 1]");
        break;
      case SweepKind::Noise:
        if (x < 0 || x > 4294967295.0 || x != std::floor(x)) bad(vkey, "noise level must be a non-negative integer");
        break;
      case SweepKind::Corruption:
        // Bounds beyond integrality are the corruption injector's own error.
        if (x < 0 || x > 4294967295.0 || x != std::floor(x))
          bad(vkey, "corruption level must be a non-negative integer");
        break;
      case SweepKind::Fraction:
        if (!(x > 0 && x <= 1)) bad(vkey, "data fraction must be in (0, 1]");
        break;
    }
    sw.values.push_back(x);
  }
  sw.repeats = opt_uint(obj, path, "repeats", sw.repeats);
  if (sw.repeats == 0) bad(path + ".repeats", "must be at least 1");
  return sw;
}

json schema_to_json(const Schema& schema) {
  json out = json::array();
  for (const ColumnSpec& c : schema) out.push_back({{"name", c.name}, {"kind", column_kind_name(c.kind)}});
  return out;
}

const char* pair_type_name(PairType t) { return t == PairType::MAE ? "mae" : "rmse"; }
const char* reg_kind_name(RegKind k) { return k == RegKind::L2 ? "l2" : k == RegKind::L1 ? "l1" : "huber"; }
const char* mode_name(LossMode m) {
  return m == LossMode::Single ? "single" : m == LossMode::MultiTask ? "multi_task" : "time_series";
}

}  // namespace

const char* sweep_kind_name(SweepKind kind) {
  switch (kind) {
    case SweepKind::Alpha: return "alpha";
    case SweepKind::Sparsity: return "sparsity";
    case SweepKind::Noise: return "noise";
    case SweepKind::Corruption: return "corruption";
    case SweepKind::Fraction: return "fraction";
  }
  return "?";
}

const char* sweep_param_name(SweepKind kind) {
  switch (kind) {
    case SweepKind::Alpha: return "alpha";
    case SweepKind::Sparsity: return "keep_fraction";
    case SweepKind::Noise: return "noise_level";
    case SweepKind::Corruption: return "corruption_level";
    case SweepKind::Fraction: return "fraction";
  }
  return "?";
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    bad("<config>", std::string("not valid JSON: ") + e.what());
  }
  if (!root.is_object()) bad("<config>", "top level must be an object");
  check_keys(root, "", {"seed", "output_dir", "dataset", "split", "model", "train", "sweep"});

  RunConfig c;
  c.seed = opt_uint(root, "", "seed", c.seed);
  c.output_dir = opt_string(root, "", "output_dir", c.output_dir);
  if (c.output_dir.empty()) bad("output_dir", "must not be empty");

  const json& dataset = as_object(need(root, "", "dataset"), "dataset");
  check_keys(dataset, "dataset", {"csv", "synthetic"});
  if (dataset.contains("csv") == dataset.contains("synthetic"))
    bad("dataset", "exactly one of 'csv' or 'synthetic' is required");
  if (dataset.contains("csv")) c.csv = parse_csv(dataset["csv"]);
  if (dataset.contains("synthetic")) c.synthetic = parse_synth(dataset["synthetic"]);

  if (auto it = root.find("split"); it != root.end()) {
    const json& split = as_object(*it, "split");
    check_keys(split, "split", {"train", "valid", "test"});
    c.f_train = opt_number(split, "split", "train", c.f_train);
    c.f_valid = opt_number(split, "split", "valid", c.f_valid);
    c.f_test = opt_number(split, "split", "test", c.f_test);
    if (c.f_train <= 0 || c.f_valid <= 0 || c.f_test <= 0) bad("split", "all three fractions must be positive");
    const double sum = c.f_train + c.f_valid + c.f_test;
    if (std::abs(sum - 1.0) > 1e-9) bad("split", "fractions must sum to 1, got " + std::to_string(sum));
  }

  if (auto it = root.find("model"); it != root.end()) {
    const json& model = as_object(*it, "model");
    check_keys(model, "model", {"hidden", "embedding_dim"});
    if (auto h = model.find("hidden"); h != model.end()) {
      if (!h->is_array()) bad("model.hidden", "expected an array of layer widths");
      c.hidden.clear();
      for (std::size_t i = 0; i < h->size(); ++i) {
        const std::string key = "model.hidden[" + std::to_string(i) + "]";
        const std::uint64_t w = as_uint((*h)[i], key);
        if (w == 0) bad(key, "layer width must be at least 1");
        c.hidden.push_back(w);
      }
    }
    c.embedding_dim = opt_uint(model, "model", "embedding_dim", c.embedding_dim);
    if (c.embedding_dim == 0) bad("model.embedding_dim", "must be at least 1");
  }

  c.train = parse_train(need(root, "", "train"));

  if (auto it = root.find("sweep"); it != root.end()) c.sweep = parse_sweep(*it);

  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad("<config>", "cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string canonical_json(const RunConfig& c) {
  json root;
  root["seed"] = c.seed;
  root["output_dir"] = c.output_dir;
  json dataset;
  if (c.csv) dataset["csv"] = {{"path", c.csv->path}, {"schema", schema_to_json(c.csv->schema)}};
  if (c.synthetic)
    dataset["synthetic"] = {{"rows", c.synthetic->rows}, {"numeric_features", c.synthetic->numeric_features}};
  root["dataset"] = dataset;
  root["split"] = {{"train", c.f_train}, {"valid", c.f_valid}, {"test", c.f_test}};
  root["model"] = {{"hidden", c.hidden}, {"embedding_dim", c.embedding_dim}};
  root["train"] = {{"learning_rate", c.train.learning_rate},
                   {"epochs", c.train.epochs},
                   {"batch_size", c.train.batch_size},
                   {"patience", c.train.patience},
                   {"horizon", c.train.horizon},
                   {"alpha", c.train.loss.alpha},
                   {"theta", c.train.loss.theta},
                   {"pair_type", pair_type_name(c.train.loss.pair_type)},
                   {"reg_kind", reg_kind_name(c.train.loss.reg_kind)},
                   {"huber_delta", c.train.loss.huber_delta},
                   {"mode", mode_name(c.train.loss.mode)},
                   {"keep_fraction", c.train.loss.keep_fraction}};
  if (c.sweep)
    root["sweep"] = {{"kind", sweep_kind_name(c.sweep->kind)},
                     {"values", c.sweep->values},
                     {"repeats", c.sweep->repeats}};
  return root.dump();
}

}  // namespace adaprl
