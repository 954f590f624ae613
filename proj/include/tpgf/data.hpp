#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tpgf/tensor.hpp"

namespace tpgf {

// ---- generators ------------------------------------------------------------

/// Station-style analog: each (node, channel) is a sum of shared sinusoids
/// with node- and channel-specific phases, blended across nodes and channels
/// by `coupling`, plus AR(1) noise of innovation scale `noise`.
///
/// With coupling = noise = 0 the value is exactly
///   x(t, n, f) = sum_m amplitude[f][m] * sin(2*pi*t / period[m] + node_phase[n][m] + channel_phase[f][m]).
struct MultinodeConfig {
  Index nodes = 10;
  Index channels = 9;
  Index length = 3000;
  double coupling = 0.5;
  double noise = 0.1;
  std::uint64_t seed = 1;
};

inline constexpr std::array<double, 3> kMultinodePeriods = {24.0, 9.7, 61.3};
inline constexpr double kArCoefficient = 0.8;

/// Random draws behind a multinode series, exposed for the closed form.
struct MultinodeCoefficients {
  Eigen::MatrixXd amplitude;      // [channels, periods]
  Eigen::MatrixXd node_phase;     // [nodes, periods]
  Eigen::MatrixXd channel_phase;  // [channels, periods]
};

MultinodeCoefficients multinode_coefficients(const MultinodeConfig& config);

/// Returns [length, nodes, channels].
SeqTensord gen_multinode_series(const MultinodeConfig& config);

/// Square sprites bouncing elastically inside an H x W grid.
struct SpriteConfig {
  Index height = 16;
  Index width = 16;
  Index num_sprites = 2;
  Index sprite_size = 5;
  Index speed_min = 1;
  Index speed_max = 2;
  Index length = 40;
  std::uint64_t seed = 1;
};

/// Sprite images (values in [0, 1]); all must share one square size.
using SpriteBank = std::vector<Eigen::MatrixXd>;

/// One axis of constant-velocity motion with elastic reflection on
/// [0, limit]: a position that would leave the range is mirrored back and
/// the velocity flips sign.
struct Axis {
  Index position;
  Index velocity;
};
Axis reflect_step(Axis axis, Index limit);

/// Returns [length, H*W, 1] with intensities in [0, 1]; overlapping sprites
/// combine by max. An empty bank means solid squares of ones.
SeqTensord gen_moving_sprites(const SpriteConfig& config, const SpriteBank& bank = {});

// ---- windows, splits, normalization -------------------------------------------

struct Sample {
  SeqTensord context;  // [T_in, N, F]
  SeqTensord target;   // [K, N, F_out]
  Index start = 0;     // time of context step 0 in the source series
};

struct DataMeta {
  std::vector<double> mean;    // per input channel
  std::vector<double> stddev;  // per input channel
  std::vector<std::string> channel_names;
  std::vector<Index> target_channels;
  bool normalized = false;
  Index grid_height = 0;  // set for frame data
  Index grid_width = 0;
  Index dropped_boundary_windows = 0;
};

/// Sliding windows of T_in + K steps at `stride`; the target keeps only
/// `target_channels`.
std::vector<Sample> windowize(const SeqTensord& series, Index input_steps, Index horizon, Index stride,
                              const std::vector<Index>& target_channels, Index time_offset = 0);

struct Splits {
  std::vector<Sample> train, val, test;
  Index dropped_boundary_windows = 0;
};

/// Chronological split. Counts are floor(n * fraction) for val and test,
/// the remainder goes to train; afterwards windows whose span reaches into
/// the following partition are dropped.
Splits split(std::vector<Sample> samples, const std::array<double, 3>& fractions);

/// Per-channel mean and population std over the context frames of `train`.
/// Throws ConfigError naming a zero-variance channel.
DataMeta fit_normalization(const std::vector<Sample>& train, const std::vector<Index>& target_channels);

/// z-scores contexts (all channels) and targets (target channels) in place.
void normalize(std::vector<Sample>& samples, const DataMeta& meta);

/// Maps [K, N, F_out] normalized predictions back to data units.
SeqTensord denormalize(const SeqTensord& predictions, const DataMeta& meta);

// ---- files --------------------------------------------------------------------

/// Header `time,node,channel,value`; values printed with 17 significant
/// digits. Time is written as time_offset + t.
void write_csv(const SeqTensord& series, const std::string& path, Index time_offset = 0);

/// Dense [T, N, F] grid from a CSV written by write_csv. Times must be
/// contiguous starting at the smallest time present; `time_offset` receives it.
SeqTensord load_csv(const std::string& path, Index* time_offset = nullptr);

/// Frame sequences, all [T, H*W, 1].
struct FrameSet {
  Index height = 0;
  Index width = 0;
  std::vector<SeqTensord> sequences;
};

/// Layout: "TPGFFRMS", u32 version (1), u64 T, u64 H, u64 W, u64 count, then
/// count * T * H * W little-endian float64 values, row-major per frame.
void write_frames(const std::string& path, const FrameSet& frames);
FrameSet read_frames(const std::string& path);

/// IDX image file (magic 0x00000803); pixels scaled to [0, 1].
SpriteBank load_idx_images(const std::string& path);

}  // namespace tpgf
