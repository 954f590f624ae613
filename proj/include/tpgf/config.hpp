#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tpgf/data.hpp"
#include "tpgf/training.hpp"

namespace tpgf {

/// Flat experiment settings, read from `key = value` lines.
struct ExperimentConfig {
  std::string dataset = "multinode";  // multinode | sprites

  // multinode
  Index nodes = 10;
  Index channels = 9;
  std::vector<Index> target_channels{0, 1, 2};
  Index series_length = 3000;
  double coupling = 0.5;
  double noise = 0.1;

  // sprites
  Index grid_h = 16;
  Index grid_w = 16;
  Index sprites = 2;
  Index sprite_size = 5;
  Index speed_min = 1;
  Index speed_max = 2;
  Index sequences = 300;
  std::string idx_path;

  // windows and splits
  Index input_steps = 24;
  Index horizon = 12;
  Index stride = 1;
  double train_frac = 0.7;
  double val_frac = 0.15;
  double test_frac = 0.15;

  TrainConfig train;

  std::string out_dir = "runs";
  std::string data_dir = "data";  // relative to out_dir
  std::string run_name;           // empty: the strategy name

  std::uint64_t seed() const { return train.seed; }
  std::string data_path() const;
  std::string run_path() const;
  std::string effective_run_name() const;
  std::array<double, 3> fractions() const { return {train_frac, val_frac, test_frac}; }

  MultinodeConfig multinode() const;
  /// Settings of frame sequence `index`; each sequence has its own stream.
  SpriteConfig sprite_config(Index index) const;

  /// Cross-field checks.
  void validate() const;
};

/// Throws ConfigError naming the key and line.
ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
ExperimentConfig parse_config(const std::string& path);

/// Every key with its value; parsing the echo gives back the same config.
std::string echo_config(const ExperimentConfig& cfg);

/// Echoed value of one key; throws ConfigError for unknown keys.
std::string config_value(const ExperimentConfig& cfg, const std::string& key);

}  // namespace tpgf
