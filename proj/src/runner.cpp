#include "adaprl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "adaprl/model.hpp"
#include "adaprl/rng.hpp"

namespace adaprl {
namespace {

// Shortest-round-trip decimal form, shared with the JSON artifacts so every
// number in every output file serializes identically.
std::string fmt(double x) { return nlohmann::json(x).dump(); }

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Seed streams hanging off the config seed (or the per-repeat seed in a
// sweep): 1 = dataset generation, 2 = splitting, 3 = perturbation injectors,
// 4 = model init and batch shuffling.
std::uint64_t data_seed(std::uint64_t s) { return mix_seed(s, 1); }
std::uint64_t split_seed(std::uint64_t s) { return mix_seed(s, 2); }
std::uint64_t perturb_seed(std::uint64_t s) { return mix_seed(s, 3); }
std::uint64_t train_seed(std::uint64_t s) { return mix_seed(s, 4); }

Dataset load_base(const RunConfig& c, std::uint64_t seed) {
  if (c.csv) return load_csv(c.csv->path, c.csv->schema);
  return synth_heteroscedastic(c.synthetic->rows, c.synthetic->numeric_features, data_seed(seed)).data;
}

MlpConfig derive_mlp(const RunConfig& c, const Dataset& base) {
  MlpConfig m;
  m.embedding_dim = c.embedding_dim;
  m.hidden = c.hidden;
  m.outputs = 0;
  for (const Column& col : base.columns) {
    if (col.kind == ColumnKind::Numeric) ++m.numeric;
    else if (col.kind == ColumnKind::Categorical) m.vocab_sizes.push_back(col.vocab.size());
    else if (col.kind == ColumnKind::Target) ++m.outputs;
  }
  return m;
}

Schema feature_schema(const Dataset& ds) {
  Schema s;
  for (const Column& c : ds.columns)
    if (c.kind == ColumnKind::Numeric || c.kind == ColumnKind::Categorical) s.push_back({c.name, c.kind});
  return s;
}

std::vector<std::vector<std::string>> feature_vocabs(const Dataset& ds) {
  std::vector<std::vector<std::string>> v;
  for (const Column& c : ds.columns)
    if (c.kind == ColumnKind::Categorical) v.push_back(c.vocab);
  return v;
}

void apply_env_seed(RunConfig& c) {
  const char* env = std::getenv("ADAPRL_SEED");
  if (!env || !*env) return;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (env[0] == '-' || errno != 0 || end == env || *end != '\0')
    throw ConfigError("ADAPRL_SEED", "expected an unsigned integer, got '" + std::string(env) + "'");
  c.seed = v;
}

// ---- sweep machinery -------------------------------------------------------

struct UnitSpec {
  std::size_t point = 0, repeat_idx = 0;
  double value = 0;
  std::uint64_t seed = 0;  // paired across arms and grid points
};

struct ArmResult {
  bool ok = false;
  MetricReport report;
  std::string error;
  int code = 0;
};

struct UnitOutcome {
  ArmResult adaprl, baseline;
};

TrainConfig arm_config(const RunConfig& c, SweepKind kind, double value, bool baseline, std::uint64_t seed) {
  TrainConfig tc = c.train;
  tc.seed = train_seed(seed);
  if (baseline) {
    tc.loss.alpha = 0.0;
    return tc;
  }
  if (kind == SweepKind::Alpha) tc.loss.alpha = value;
  if (kind == SweepKind::Sparsity) tc.loss.keep_fraction = value;
  return tc;
}

void perturb(Splits& sp, SweepKind kind, double value, std::uint64_t seed) {
  switch (kind) {
    case SweepKind::Noise:
      sp.train = inject_label_noise(sp.train, {static_cast<unsigned>(value), seed});
      break;
    case SweepKind::Corruption: {
      CorruptionSpec spec;
      spec.level = static_cast<unsigned>(value);
      spec.seed = seed;
      auto corrupted = corrupt_columns(sp.valid, sp.test, spec);
      sp.valid = std::move(corrupted.first);
      sp.test = std::move(corrupted.second);
      break;
    }
    case SweepKind::Fraction:
      sp.train = subsample(sp.train, value, seed);
      break;
    default:
      break;
  }
}

int error_code(const std::exception& e) {
  if (dynamic_cast<const TrainAbort*>(&e)) return kExitNumeric;
  return kExitData;
}

UnitOutcome run_unit(const RunConfig& c, SweepKind kind, const UnitSpec& u, const Dataset* csv_base) {
  UnitOutcome out;
  Splits sp;
  MlpConfig mlp;
  try {
    Dataset base = csv_base ? *csv_base : load_base(c, u.seed);
    sp = split_random(base, c.f_train, c.f_valid, c.f_test, split_seed(u.seed));
    perturb(sp, kind, u.value, perturb_seed(u.seed));
    mlp = derive_mlp(c, base);
  } catch (const std::exception& e) {
    out.adaprl.error = out.baseline.error = e.what();
    out.adaprl.code = out.baseline.code = error_code(e);
    return out;
  }
  ArmResult* arms[2] = {&out.adaprl, &out.baseline};
  for (int b = 0; b < 2; ++b) {
    try {
      TrainState st = fit(arm_config(c, kind, u.value, b == 1, u.seed), mlp, sp.train, sp.valid);
      arms[b]->report = evaluate(st.pair, sp.test).report;
      arms[b]->ok = true;
    } catch (const std::exception& e) {
      arms[b]->error = e.what();
      arms[b]->code = error_code(e);
    }
  }
  return out;
}

}  // namespace

std::string run_stamp(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::parse(canonical_json(config));
  j.erase("output_dir");  // relocating outputs must not change the run identity
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string("run-") + buf;
}

TrainArtifacts run_train(const RunConfig& config) {
  Dataset base = load_base(config, config.seed);
  Splits sp = split_random(base, config.f_train, config.f_valid, config.f_test, split_seed(config.seed));
  MlpConfig mlp = derive_mlp(config, base);
  TrainConfig tc = config.train;
  tc.seed = train_seed(config.seed);

  std::string log_text;
  TrainState st = fit(tc, mlp, sp.train, sp.valid, [&](const std::string& line) {
    log_text += line;
    log_text += '\n';
  });
  EvalResult on_valid = evaluate(st.pair, sp.valid);
  EvalResult on_test = evaluate(st.pair, sp.test);

  TrainArtifacts art;
  art.dir = config.output_dir + "/" + run_stamp(config);
  std::filesystem::create_directories(art.dir);
  art.checkpoint = art.dir + "/checkpoint.bin";
  art.log = art.dir + "/train_log.jsonl";
  art.metrics = art.dir + "/metrics.json";

  save_checkpoint(art.checkpoint, st.pair, feature_schema(base), feature_vocabs(base));
  write_text(art.log, log_text);
  nlohmann::json m;
  m["valid"] = nlohmann::json::parse(on_valid.report.to_json());
  m["test"] = nlohmann::json::parse(on_test.report.to_json());
  write_text(art.metrics, m.dump(2) + "\n");
  return art;
}

SweepArtifacts run_sweep(const RunConfig& config, std::size_t jobs) {
  if (!config.sweep) throw ConfigError("sweep", "required key is missing (the sweep command needs a grid)");
  const SweepSpec& sw = *config.sweep;

  // CSV sources are read once up front so a bad path fails before any work.
  std::optional<Dataset> csv_base;
  if (config.csv) csv_base = load_csv(config.csv->path, config.csv->schema);

  std::vector<UnitSpec> units;
  for (std::size_t p = 0; p < sw.values.size(); ++p)
    for (std::size_t r = 0; r < sw.repeats; ++r)
      units.push_back({p, r, sw.values[p], mix_seed(config.seed, r)});

  std::vector<UnitOutcome> outcomes(units.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= units.size()) return;
      outcomes[i] = run_unit(config, sw.kind, units[i], csv_base ? &*csv_base : nullptr);
    }
  };
  const std::size_t n_threads = std::min(std::max<std::size_t>(jobs, 1), units.size());
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  const std::string param = sweep_param_name(sw.kind);
  std::string detail = "param,value,arm,seed,mse,mae,kendall_tau,rel_imp_mse\n";
  std::string failures = "param,value,arm,seed,code,error\n";

  SweepArtifacts art;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const UnitSpec& u = units[i];
    const UnitOutcome& o = outcomes[i];
    if (o.adaprl.ok && o.baseline.ok) {
      const MetricReport& a = o.adaprl.report;
      const MetricReport& b = o.baseline.report;
      const double rel = b.mse == 0.0 ? 0.0 : (b.mse - a.mse) / b.mse;
      const std::string head = param + "," + fmt(u.value);
      detail += head + ",adaprl," + std::to_string(u.seed) + "," + fmt(a.mse) + "," + fmt(a.mae) + "," +
                fmt(a.kendall_tau) + "," + fmt(rel) + "\n";
      detail += head + ",baseline," + std::to_string(u.seed) + "," + fmt(b.mse) + "," + fmt(b.mae) + "," +
                fmt(b.kendall_tau) + "," + fmt(0.0) + "\n";
    } else {
      ++art.failed_points;
      const ArmResult* arms[2] = {&o.adaprl, &o.baseline};
      const char* names[2] = {"adaprl", "baseline"};
      for (int b = 0; b < 2; ++b) {
        if (arms[b]->ok) continue;
        if (art.first_error_code == 0) art.first_error_code = arms[b]->code;
        failures += param + "," + fmt(u.value) + "," + names[b] + "," + std::to_string(u.seed) + "," +
                    std::to_string(arms[b]->code) + "," + csv_quote(arms[b]->error) + "\n";
      }
    }
  }

  // Per-point means over the successful paired units, summed in detail-row
  // order so a reader recomputing them reproduces the exact bytes.
  std::string aggregate =
      "param,value,adaprl_mse,baseline_mse,adaprl_mae,baseline_mae,adaprl_kendall_tau,baseline_kendall_tau,"
      "rel_imp_mse\n";
  for (std::size_t p = 0; p < sw.values.size(); ++p) {
    double sums[7] = {0, 0, 0, 0, 0, 0, 0};
    std::size_t n = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (units[i].point != p || !outcomes[i].adaprl.ok || !outcomes[i].baseline.ok) continue;
      const MetricReport& a = outcomes[i].adaprl.report;
      const MetricReport& b = outcomes[i].baseline.report;
      sums[0] += a.mse;
      sums[1] += b.mse;
      sums[2] += a.mae;
      sums[3] += b.mae;
      sums[4] += a.kendall_tau;
      sums[5] += b.kendall_tau;
      sums[6] += b.mse == 0.0 ? 0.0 : (b.mse - a.mse) / b.mse;
      ++n;
    }
    if (n == 0) continue;
    aggregate += param + "," + fmt(sw.values[p]);
    for (double s : sums) aggregate += "," + fmt(s / static_cast<double>(n));
    aggregate += "\n";
  }

  art.dir = config.output_dir + "/" + run_stamp(config);
  std::filesystem::create_directories(art.dir);
  art.detail = art.dir + "/detail.csv";
  art.aggregate = art.dir + "/aggregate.csv";
  art.failures = art.dir + "/failures.csv";
  write_text(art.detail, detail);
  write_text(art.aggregate, aggregate);
  if (art.failed_points > 0)
    write_text(art.failures, failures);
  else
    std::filesystem::remove(art.failures);
  return art;
}

int cmd_train(const std::string& config_path, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    RunConfig c = load_run_config(config_path);
    apply_env_seed(c);
    if (opt.out) c.output_dir = *opt.out;
    TrainArtifacts art = run_train(c);
    out << art.dir << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainAbort& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int cmd_sweep(const std::string& config_path, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    RunConfig c = load_run_config(config_path);
    apply_env_seed(c);
    if (opt.out) c.output_dir = *opt.out;
    if (opt.repeats) {
      if (!c.sweep) throw ConfigError("sweep", "required key is missing (the sweep command needs a grid)");
      c.sweep->repeats = *opt.repeats;
      if (c.sweep->repeats == 0) throw ConfigError("sweep.repeats", "must be at least 1");
    }
    SweepArtifacts art = run_sweep(c, opt.jobs);
    out << art.dir << "\n";
    if (art.failed_points > 0) {
      err << "error: " << art.failed_points << " grid point(s) failed; see " << art.failures << "\n";
      return art.first_error_code;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainAbort& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int cmd_predict(const std::string& checkpoint, const std::string& csv_in, const std::string& csv_out,
                std::ostream& err) {
  try {
    Checkpoint ck = load_checkpoint(checkpoint);
    std::vector<std::pair<std::string, std::vector<std::string>>> pins;
    std::size_t vi = 0;
    for (const ColumnSpec& c : ck.schema)
      if (c.kind == ColumnKind::Categorical) pins.emplace_back(c.name, ck.vocabs.at(vi++));
    Dataset ds = load_csv_features(csv_in, ck.schema, pins);
    Predictions p = predict_rows(ck.pair, ds);

    std::string text = "row";
    for (std::size_t t = 0; t < p.width; ++t) {
      const std::string suffix = p.width == 1 ? "" : "_" + std::to_string(t + 1);
      for (const char* name : {"yhat", "mu", "sigma", "lower", "upper"}) text += "," + (name + suffix);
    }
    text += "\n";
    for (std::size_t r = 0; r < p.rows; ++r) {
      text += std::to_string(r);
      for (std::size_t t = 0; t < p.width; ++t) {
        const std::size_t k = r * p.width + t;
        text += "," + fmt(p.yhat[k]) + "," + fmt(p.mu[k]) + "," + fmt(p.sigma[k]) + "," +
                fmt(p.mu[k] - p.sigma[k]) + "," + fmt(p.mu[k] + p.sigma[k]);
      }
      text += "\n";
    }
    write_text(csv_out, text);
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace adaprl
