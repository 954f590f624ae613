#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tpgf/config.hpp"
#include "tpgf/training.hpp"

namespace tpgf {

/// Samples of a config's dataset generated in memory, split and normalized.
TrainData build_dataset(const ExperimentConfig& cfg);

/// The same dataset read back from the files written by cmd_generate.
TrainData load_dataset(const ExperimentConfig& cfg);

/// Writes the dataset files and a config echo under data_path().
void cmd_generate(const ExperimentConfig& cfg, std::ostream& log);

/// Trains and writes checkpoints, curves.csv and a config echo under run_path().
void cmd_train(const ExperimentConfig& cfg, std::ostream& log);

/// Closed-loop test metrics of a checkpoint (default: the run's final model)
/// written to run_path()/metrics.csv.
EvalReport cmd_evaluate(const ExperimentConfig& cfg, const std::optional<std::string>& checkpoint, std::ostream& log);

struct ComparisonTable {
  std::vector<std::string> runs;
  std::vector<std::string> columns;  // metric:channel
  std::vector<std::vector<double>> values;  // [run][column]
  std::vector<std::vector<bool>> best;

  std::string to_csv() const;
  std::string to_text() const;
};

ComparisonTable compare_runs(const std::vector<ExperimentConfig>& cfgs);

/// Writes compare.csv and compare.txt under `out_dir` (default: the first
/// config's out_dir).
ComparisonTable cmd_compare(const std::vector<ExperimentConfig>& cfgs, const std::optional<std::string>& out_dir,
                            std::ostream& log);

struct CommandLine {
  std::string command;
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
};

/// Runs one command; returns 0, 2 for configuration errors, 3 for runtime
/// errors. Messages go to `err`.
int run_command(const CommandLine& cl, std::ostream& log, std::ostream& err);

}  // namespace tpgf
