#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "adaprl/run_config.hpp"

namespace adaprl {

// Subcommand exit codes.
inline constexpr int kExitOk = 0;        // success
inline constexpr int kExitConfig = 1;    // config parse error (message names the key)
inline constexpr int kExitData = 2;      // data or I/O error
inline constexpr int kExitNumeric = 3;   // non-finite loss abort

// Directory name for a run, derived from the config content alone (no
// timestamps): rerunning the same config writes into the same directory.
// The output_dir field itself is excluded so --out relocations don't
// change the stamp.
std::string run_stamp(const RunConfig& config);

struct TrainArtifacts {
  std::string dir, checkpoint, log, metrics;
};
// Trains once and writes checkpoint.bin, train_log.jsonl, and metrics.json
// (valid + test reports) under <output_dir>/<stamp>/. Throws on failure.
TrainArtifacts run_train(const RunConfig& config);

struct SweepArtifacts {
  std::string dir, detail, aggregate, failures;
  std::size_t failed_points = 0;  // failures file exists only when > 0
  int first_error_code = 0;
};
// Runs grid x repeats x {adaprl, alpha=0 baseline} with paired seeds and
// writes detail.csv / aggregate.csv (and failures.csv when some grid point
// failed). `jobs` bounds the worker threads; results are merged in grid
// order, so any job count produces identical bytes.
SweepArtifacts run_sweep(const RunConfig& config, std::size_t jobs);

struct CliOptions {
  std::size_t jobs = 1;
  std::optional<std::size_t> repeats;  // overrides sweep.repeats
  std::optional<std::string> out;      // overrides output_dir
};

// Command wrappers: parse the config file, apply ADAPRL_SEED and the CLI
// overrides, run, and map failures onto the exit codes above. The run
// directory is printed to `out`; diagnostics go to `err`.
int cmd_train(const std::string& config_path, const CliOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::string& config_path, const CliOptions& opt, std::ostream& out, std::ostream& err);
// Loads a checkpoint, encodes the input CSV against its stored schema and
// vocabularies, and writes one row per input row: index, yhat, mu, sigma,
// and the one-sigma band [mu - sigma, mu + sigma] per target.
int cmd_predict(const std::string& checkpoint, const std::string& csv_in, const std::string& csv_out,
                std::ostream& err);

}  // namespace adaprl
