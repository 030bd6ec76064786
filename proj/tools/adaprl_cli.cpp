#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "adaprl/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"adaprl: confidence-weighted pairwise regression lab"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, csv_in, csv_out;
  adaprl::CliOptions opt;
  std::size_t repeats = 0;
  std::string out_dir;

  CLI::App* train = app.add_subcommand("train", "train once from a JSON config and write artifacts");
  train->add_option("config", config_path, "path to the run config")->required();
  train->add_option("--out", out_dir, "output directory (overrides output_dir in the config)");

  CLI::App* sweep = app.add_subcommand("sweep", "run a parameter grid with a paired alpha=0 baseline");
  sweep->add_option("config", config_path, "path to the run config (must contain a sweep block)")->required();
  sweep->add_option("--jobs", opt.jobs, "worker threads for grid points")->check(CLI::PositiveNumber);
  sweep->add_option("--repeats", repeats, "seeds per grid point (overrides sweep.repeats)")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "output directory (overrides output_dir in the config)");

  CLI::App* predict = app.add_subcommand("predict", "export predictions with one-sigma bands for a CSV");
  predict->add_option("checkpoint", checkpoint, "checkpoint written by train")->required();
  predict->add_option("input", csv_in, "feature CSV matching the checkpoint schema")->required();
  predict->add_option("output", csv_out, "destination CSV")->required();

  CLI11_PARSE(app, argc, argv);

  if (!out_dir.empty()) opt.out = out_dir;
  if (repeats > 0) opt.repeats = repeats;

  if (train->parsed()) return adaprl::cmd_train(config_path, opt, std::cout, std::cerr);
  if (sweep->parsed()) return adaprl::cmd_sweep(config_path, opt, std::cout, std::cerr);
  return adaprl::cmd_predict(checkpoint, csv_in, csv_out, std::cerr);
}
