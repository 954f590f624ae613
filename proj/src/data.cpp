#include "tpgf/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "binary_io.hpp"
#include "tpgf/rng.hpp"

namespace tpgf {

// ---- generators ------------------------------------------------------------

MultinodeCoefficients multinode_coefficients(const MultinodeConfig& config) {
  if (config.nodes < 1 || config.channels < 1 || config.length < 1) {
    throw ConfigError("multinode: nodes, channels and length must be >= 1");
  }
  if (!(config.noise >= 0.0)) throw ConfigError("multinode: noise must be >= 0");
  if (!(config.coupling >= 0.0 && config.coupling <= 1.0)) throw ConfigError("multinode: coupling must lie in [0, 1]");

  const auto periods = static_cast<Index>(kMultinodePeriods.size());
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Rng rng(config.seed);
  MultinodeCoefficients k;
  k.amplitude.resize(config.channels, periods);
  k.node_phase.resize(config.nodes, periods);
  k.channel_phase.resize(config.channels, periods);
  for (Index f = 0; f < config.channels; ++f)
    for (Index m = 0; m < periods; ++m) k.amplitude(f, m) = 0.5 + rng.uniform();
  for (Index n = 0; n < config.nodes; ++n)
    for (Index m = 0; m < periods; ++m) k.node_phase(n, m) = two_pi * rng.uniform();
  for (Index f = 0; f < config.channels; ++f)
    for (Index m = 0; m < periods; ++m) k.channel_phase(f, m) = two_pi * rng.uniform();
  return k;
}

SeqTensord gen_multinode_series(const MultinodeConfig& config) {
  const MultinodeCoefficients k = multinode_coefficients(config);
  const Index nodes = config.nodes;
  const Index channels = config.channels;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  SeqTensord base({config.length, nodes, channels});
  for (Index t = 0; t < config.length; ++t)
    for (Index n = 0; n < nodes; ++n)
      for (Index f = 0; f < channels; ++f) {
        double v = 0.0;
        for (std::size_t m = 0; m < kMultinodePeriods.size(); ++m) {
          const auto mi = static_cast<Index>(m);
          v += k.amplitude(f, mi) * std::sin(two_pi * static_cast<double>(t) / kMultinodePeriods[m] +
                                             k.node_phase(n, mi) + k.channel_phase(f, mi));
        }
        base(t, n, f) = v;
      }

  // Coupling pulls every node toward the cross-node mean of its own channel
  // (weight 0.7) and of the next channel (weight 0.3).
  const double c = config.coupling;
  SeqTensord out({config.length, nodes, channels});
  Eigen::VectorXd node_mean(channels);
  for (Index t = 0; t < config.length; ++t) {
    node_mean.setZero();
    for (Index n = 0; n < nodes; ++n)
      for (Index f = 0; f < channels; ++f) node_mean(f) += base(t, n, f);
    node_mean /= static_cast<double>(nodes);
    for (Index n = 0; n < nodes; ++n)
      for (Index f = 0; f < channels; ++f) {
        const double blend = 0.7 * node_mean(f) + 0.3 * node_mean((f + 1) % channels);
        out(t, n, f) = (1.0 - c) * base(t, n, f) + c * blend;
      }
  }

  Rng noise_rng = Rng(config.seed).split(0x6E6F697365ULL);
  const double stationary = config.noise / std::sqrt(1.0 - kArCoefficient * kArCoefficient);
  Eigen::VectorXd state(nodes * channels);
  for (Index j = 0; j < state.size(); ++j) state(j) = stationary * noise_rng.normal();
  for (Index t = 0; t < config.length; ++t) {
    if (t > 0) {
      for (Index j = 0; j < state.size(); ++j) state(j) = kArCoefficient * state(j) + config.noise * noise_rng.normal();
    }
    out.frame(t) += state;
  }
  return out;
}

Axis reflect_step(Axis axis, Index limit) {
  if (limit <= 0) return {0, axis.velocity};
  Index p = axis.position + axis.velocity;
  Index v = axis.velocity;
  while (p < 0 || p > limit) {
    if (p < 0) {
      p = -p;
      v = -v;
    } else {
      p = 2 * limit - p;
      v = -v;
    }
  }
  return {p, v};
}

SeqTensord gen_moving_sprites(const SpriteConfig& config, const SpriteBank& bank) {
  if (config.height < 1 || config.width < 1 || config.length < 1 || config.num_sprites < 0) {
    throw ConfigError("sprites: grid, length and sprite count must be positive");
  }
  if (config.speed_min < 0 || config.speed_max < config.speed_min) {
    throw ConfigError("sprites: speed range must satisfy 0 <= speed_min <= speed_max");
  }
  Index size = config.sprite_size;
  if (!bank.empty()) {
    size = bank.front().rows();
    for (const auto& img : bank) {
      if (img.rows() != size || img.cols() != size) throw ConfigError("sprites: bank images must share one square size");
    }
  }
  if (size < 1 || size > config.height || size > config.width) {
    throw ConfigError("sprites: sprite of size " + std::to_string(size) + " does not fit a " +
                      std::to_string(config.height) + "x" + std::to_string(config.width) + " grid");
  }

  struct Track {
    Axis row, col;
    Index image;
  };
  Rng rng(config.seed);
  const Index row_limit = config.height - size;
  const Index col_limit = config.width - size;
  const auto speed_span = static_cast<std::uint64_t>(config.speed_max - config.speed_min + 1);
  auto draw_velocity = [&] {
    const Index speed = config.speed_min + static_cast<Index>(rng.uniform_int(speed_span));
    return rng.bernoulli(0.5) ? speed : -speed;
  };
  std::vector<Track> tracks;
  for (Index s = 0; s < config.num_sprites; ++s) {
    Track tr;
    tr.image = bank.empty() ? 0 : static_cast<Index>(rng.uniform_int(bank.size()));
    tr.row.position = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(row_limit + 1)));
    tr.col.position = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(col_limit + 1)));
    tr.row.velocity = draw_velocity();
    tr.col.velocity = draw_velocity();
    tracks.push_back(tr);
  }

  SeqTensord frames({config.length, config.height * config.width, 1});
  for (Index t = 0; t < config.length; ++t) {
    auto frame = frames.frame(t);
    for (auto& tr : tracks) {
      for (Index i = 0; i < size; ++i)
        for (Index j = 0; j < size; ++j) {
          const double v = bank.empty() ? 1.0 : std::clamp(bank[static_cast<std::size_t>(tr.image)](i, j), 0.0, 1.0);
          double& px = frame((tr.row.position + i) * config.width + tr.col.position + j);
          px = std::max(px, v);
        }
      tr.row = reflect_step(tr.row, row_limit);
      tr.col = reflect_step(tr.col, col_limit);
    }
  }
  return frames;
}

// ---- windows, splits, normalization -------------------------------------------

std::vector<Sample> windowize(const SeqTensord& series, Index input_steps, Index horizon, Index stride,
                              const std::vector<Index>& target_channels, Index time_offset) {
  if (series.rank() != 3) throw DimensionError("windowize: series must be [T, N, F], got " + shape_string(series.shape()));
  if (input_steps < 1 || horizon < 1 || stride < 1) throw ConfigError("windowize: T_in, K and stride must be >= 1");
  const Index length = series.time_steps();
  const Index span = input_steps + horizon;
  if (length < span) {
    throw ConfigError("windowize: series of length " + std::to_string(length) + " is shorter than T_in + K = " +
                      std::to_string(span));
  }
  const Index nodes = series.extent(1);
  const Index channels = series.extent(2);
  for (Index c : target_channels) {
    if (c < 0 || c >= channels) throw ConfigError("windowize: target channel " + std::to_string(c) + " out of range");
  }
  const auto n_targets = static_cast<Index>(target_channels.size());

  std::vector<Sample> out;
  for (Index s = 0; s + span <= length; s += stride) {
    Sample sample;
    sample.start = time_offset + s;
    sample.context = SeqTensord({input_steps, nodes, channels});
    for (Index t = 0; t < input_steps; ++t) sample.context.frame(t) = series.frame(s + t);
    sample.target = SeqTensord({horizon, nodes, n_targets});
    for (Index t = 0; t < horizon; ++t)
      for (Index n = 0; n < nodes; ++n)
        for (Index j = 0; j < n_targets; ++j)
          sample.target(t, n, j) = series(s + input_steps + t, n, target_channels[static_cast<std::size_t>(j)]);
    out.push_back(std::move(sample));
  }
  return out;
}

Splits split(std::vector<Sample> samples, const std::array<double, 3>& fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split: fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
  const auto n = static_cast<Index>(samples.size());
  const auto n_val = static_cast<Index>(std::floor(static_cast<double>(n) * fractions[1] + 1e-9));
  const auto n_test = static_cast<Index>(std::floor(static_cast<double>(n) * fractions[2] + 1e-9));
  const Index n_train = n - n_val - n_test;

  Splits out;
  auto begin = std::make_move_iterator(samples.begin());
  out.train.assign(begin, begin + n_train);
  out.val.assign(begin + n_train, begin + n_train + n_val);
  out.test.assign(begin + n_train + n_val, std::make_move_iterator(samples.end()));

  auto span_end = [](const Sample& s) { return s.start + s.context.time_steps() + s.target.time_steps(); };
  auto purge = [&](std::vector<Sample>& part, const std::vector<Sample>& next) {
    if (next.empty()) return;
    const Index boundary = next.front().start;
    while (!part.empty() && span_end(part.back()) > boundary) {
      part.pop_back();
      ++out.dropped_boundary_windows;
    }
  };
  purge(out.val, out.test);
  purge(out.train, out.val.empty() ? out.test : out.val);

  const char* names[3] = {"train", "val", "test"};
  const std::vector<Sample>* parts[3] = {&out.train, &out.val, &out.test};
  for (int k = 0; k < 3; ++k) {
    if (fractions[static_cast<std::size_t>(k)] > 0.0 && parts[k]->empty()) {
      throw ConfigError(std::string("split: ") + names[k] + " partition is empty");
    }
  }
  return out;
}

DataMeta fit_normalization(const std::vector<Sample>& train, const std::vector<Index>& target_channels) {
  if (train.empty()) throw ConfigError("normalize: training split is empty");
  const Index channels = train.front().context.extent(2);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(channels);
  double count = 0.0;
  for (const auto& s : train) {
    const Eigen::Map<const Eigen::MatrixXd> m(s.context.data().data(), channels, s.context.size() / channels);
    sum += m.rowwise().sum();
    count += static_cast<double>(m.cols());
  }
  const Eigen::VectorXd mean = sum / count;
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(channels);
  for (const auto& s : train) {
    const Eigen::Map<const Eigen::MatrixXd> m(s.context.data().data(), channels, s.context.size() / channels);
    sq += (m.colwise() - mean).array().square().matrix().rowwise().sum();
  }
  DataMeta meta;
  meta.normalized = true;
  meta.target_channels = target_channels;
  for (Index f = 0; f < channels; ++f) {
    const double sd = std::sqrt(sq(f) / count);
    if (!(sd > 1e-12)) throw ConfigError("normalize: channel " + std::to_string(f) + " has zero variance");
    meta.mean.push_back(mean(f));
    meta.stddev.push_back(sd);
    meta.channel_names.push_back("c" + std::to_string(f));
  }
  return meta;
}

void normalize(std::vector<Sample>& samples, const DataMeta& meta) {
  if (!meta.normalized) return;
  const auto channels = static_cast<Index>(meta.mean.size());
  const Eigen::Map<const Eigen::VectorXd> mean(meta.mean.data(), channels);
  const Eigen::Map<const Eigen::VectorXd> sd(meta.stddev.data(), channels);
  const auto n_targets = static_cast<Index>(meta.target_channels.size());
  Eigen::VectorXd t_mean(n_targets), t_sd(n_targets);
  for (Index j = 0; j < n_targets; ++j) {
    t_mean(j) = mean(meta.target_channels[static_cast<std::size_t>(j)]);
    t_sd(j) = sd(meta.target_channels[static_cast<std::size_t>(j)]);
  }
  for (auto& s : samples) {
    if (s.context.extent(2) != channels || s.target.extent(2) != n_targets) {
      throw DimensionError("normalize: sample channels do not match normalization statistics");
    }
    Eigen::Map<Eigen::MatrixXd> c(s.context.data().data(), channels, s.context.size() / channels);
    c = ((c.colwise() - mean).array().colwise() / sd.array()).matrix();
    Eigen::Map<Eigen::MatrixXd> t(s.target.data().data(), n_targets, s.target.size() / n_targets);
    t = ((t.colwise() - t_mean).array().colwise() / t_sd.array()).matrix();
  }
}

SeqTensord denormalize(const SeqTensord& predictions, const DataMeta& meta) {
  if (!meta.normalized) return predictions;
  const auto n_targets = static_cast<Index>(meta.target_channels.size());
  if (predictions.rank() != 3 || predictions.extent(2) != n_targets) {
    throw DimensionError("denormalize: expected [K, N, " + std::to_string(n_targets) + "], got " +
                         shape_string(predictions.shape()));
  }
  SeqTensord out = predictions;
  for (Index k = 0; k < out.size(); ++k) {
    const auto ch = static_cast<std::size_t>(meta.target_channels[static_cast<std::size_t>(k % n_targets)]);
    out.data()(k) = out.data()(k) * meta.stddev[ch] + meta.mean[ch];
  }
  return out;
}

// ---- files --------------------------------------------------------------------

void write_csv(const SeqTensord& series, const std::string& path, Index time_offset) {
  if (series.rank() != 3) throw DimensionError("write_csv: series must be [T, N, F]");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fputs("time,node,channel,value\n", f);
  for (Index t = 0; t < series.extent(0); ++t)
    for (Index n = 0; n < series.extent(1); ++n)
      for (Index c = 0; c < series.extent(2); ++c)
        std::fprintf(f, "%lld,%lld,%lld,%.17g\n", static_cast<long long>(time_offset + t), static_cast<long long>(n),
                     static_cast<long long>(c), series(t, n, c));
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw IoError("failed writing " + path);
}

SeqTensord load_csv(const std::string& path, Index* time_offset) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time,node,channel,value") throw FormatError(path + ": expected header 'time,node,channel,value'");

  struct Row {
    long long t, n, c;
    double v;
  };
  std::vector<Row> rows;
  long long t_min = 0, t_max = -1, n_max = -1, c_max = -1;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Row r{};
    char* end = nullptr;
    const char* p = line.c_str();
    auto parse_int = [&](long long& out) {
      out = std::strtoll(p, &end, 10);
      if (end == p || *end != ',') throw FormatError(path + ":" + std::to_string(line_no) + ": malformed row");
      p = end + 1;
    };
    parse_int(r.t);
    parse_int(r.n);
    parse_int(r.c);
    r.v = std::strtod(p, &end);
    if (end == p || *end != '\0') throw FormatError(path + ":" + std::to_string(line_no) + ": malformed value");
    if (r.n < 0 || r.c < 0) throw FormatError(path + ":" + std::to_string(line_no) + ": negative index");
    if (rows.empty() || r.t < t_min) t_min = r.t;
    t_max = std::max(t_max, r.t);
    n_max = std::max(n_max, r.n);
    c_max = std::max(c_max, r.c);
    rows.push_back(r);
  }
  if (rows.empty()) throw FormatError(path + ": no data rows");

  const Index T = t_max - t_min + 1, N = n_max + 1, F = c_max + 1;
  SeqTensord out({T, N, F});
  std::vector<char> seen(static_cast<std::size_t>(T * N * F), 0);
  for (const auto& r : rows) {
    const auto k = static_cast<std::size_t>(((r.t - t_min) * N + r.n) * F + r.c);
    if (seen[k]) {
      throw FormatError(path + ": duplicate cell (time=" + std::to_string(r.t) + ", node=" + std::to_string(r.n) +
                        ", channel=" + std::to_string(r.c) + ")");
    }
    seen[k] = 1;
    out.data()(static_cast<Index>(k)) = r.v;
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) {
      const auto idx = static_cast<long long>(k);
      throw FormatError(path + ": missing cell (time=" + std::to_string(t_min + idx / (N * F)) +
                        ", node=" + std::to_string((idx / F) % N) + ", channel=" + std::to_string(idx % F) + ")");
    }
  }
  if (time_offset) *time_offset = t_min;
  return out;
}

namespace {
constexpr char kFramesMagic[8] = {'T', 'P', 'G', 'F', 'F', 'R', 'M', 'S'};
constexpr std::uint32_t kFramesVersion = 1;
}  // namespace

void write_frames(const std::string& path, const FrameSet& frames) {
  const Index T = frames.sequences.empty() ? 0 : frames.sequences.front().time_steps();
  for (const auto& s : frames.sequences) {
    if (s.time_steps() != T || s.frame_size() != frames.height * frames.width) {
      throw DimensionError("write_frames: sequences must share length and grid " + std::to_string(frames.height) +
                           "x" + std::to_string(frames.width));
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kFramesMagic, 8);
  io::write_u32(os, kFramesVersion);
  io::write_u64(os, static_cast<std::uint64_t>(T));
  io::write_u64(os, static_cast<std::uint64_t>(frames.height));
  io::write_u64(os, static_cast<std::uint64_t>(frames.width));
  io::write_u64(os, frames.sequences.size());
  for (const auto& s : frames.sequences)
    for (Index k = 0; k < s.size(); ++k) io::write_f64(os, s.data()(k));
  if (!os) throw IoError("failed writing " + path);
}

FrameSet read_frames(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kFramesMagic, 8) != 0) throw FormatError(path + ": bad magic");
  if (io::read_u32(is, path) != kFramesVersion) throw FormatError(path + ": unsupported version");
  const auto T = static_cast<Index>(io::read_u64(is, path));
  FrameSet out;
  out.height = static_cast<Index>(io::read_u64(is, path));
  out.width = static_cast<Index>(io::read_u64(is, path));
  const std::uint64_t count = io::read_u64(is, path);
  if (T < 0 || out.height < 1 || out.width < 1 || count > (1ULL << 32)) throw FormatError(path + ": implausible header");
  for (std::uint64_t k = 0; k < count; ++k) {
    SeqTensord s({T, out.height * out.width, 1});
    for (Index i = 0; i < s.size(); ++i) s.data()(i) = io::read_f64(is, path);
    out.sequences.push_back(std::move(s));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes");
  return out;
}

SpriteBank load_idx_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  const std::uint32_t magic = io::read_be_u32(is, path);
  if (magic != 0x00000803) throw FormatError(path + ": not an IDX image file (magic " + std::to_string(magic) + ")");
  const std::uint32_t count = io::read_be_u32(is, path);
  const std::uint32_t rows = io::read_be_u32(is, path);
  const std::uint32_t cols = io::read_be_u32(is, path);
  SpriteBank bank;
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t k = 0; k < count; ++k) {
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw FormatError(path + ": truncated at image " + std::to_string(k) + " of " + std::to_string(count));
    }
    Eigen::MatrixXd img(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) img(r, c) = buf[r * cols + c] / 255.0;
    bank.push_back(std::move(img));
  }
  return bank;
}

}  // namespace tpgf
