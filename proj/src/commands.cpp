#include "tpgf/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace tpgf {

namespace fs = std::filesystem;

namespace {

// Keys whose values shape the generated files.
const char* const kDataKeys[] = {"dataset",     "nodes",       "channels",  "series_length", "coupling",
                                 "noise",       "grid_h",      "grid_w",    "sprites",       "sprite_size",
                                 "speed_min",   "speed_max",   "sequences", "idx_path",      "input_steps",
                                 "horizon",     "stride",      "train_frac", "val_frac",     "test_frac",
                                 "seed"};

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << text;
  if (!os) throw IoError("failed writing " + path);
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

struct SpriteSplitCounts {
  Index train, val, test;
};

SpriteSplitCounts sprite_counts(const ExperimentConfig& cfg) {
  const auto n = static_cast<double>(cfg.sequences);
  const auto val = static_cast<Index>(std::floor(n * cfg.val_frac + 1e-9));
  const auto test = static_cast<Index>(std::floor(n * cfg.test_frac + 1e-9));
  const SpriteSplitCounts c{cfg.sequences - val - test, val, test};
  if ((cfg.train_frac > 0 && c.train < 1) || (cfg.val_frac > 0 && c.val < 1) || (cfg.test_frac > 0 && c.test < 1)) {
    throw ConfigError("sequences = " + std::to_string(cfg.sequences) + " leaves a split empty");
  }
  return c;
}

SpriteBank sprite_bank(const ExperimentConfig& cfg) {
  return cfg.idx_path.empty() ? SpriteBank{} : load_idx_images(cfg.idx_path);
}

DataMeta frame_meta(const ExperimentConfig& cfg) {
  DataMeta meta;
  meta.channel_names = {"pixel"};
  meta.target_channels = {0};
  meta.grid_height = cfg.grid_h;
  meta.grid_width = cfg.grid_w;
  return meta;
}

std::vector<Sample> frame_samples(const std::vector<SeqTensord>& sequences, const ExperimentConfig& cfg) {
  std::vector<Sample> out;
  for (const auto& seq : sequences) {
    auto w = windowize(seq, cfg.input_steps, cfg.horizon, cfg.input_steps + cfg.horizon, {0});
    out.push_back(std::move(w.front()));
  }
  return out;
}

void finish_normalization(TrainData& data, const std::vector<Index>& targets, Index dropped) {
  data.meta = fit_normalization(data.train, targets);
  data.meta.dropped_boundary_windows = dropped;
  normalize(data.train, data.meta);
  normalize(data.val, data.meta);
  normalize(data.test, data.meta);
}

// Time range [first start, last start + window) covered by a split.
std::pair<Index, Index> span_of(const std::vector<Sample>& split, Index window) {
  return {split.front().start, split.back().start + window};
}

std::string require_file(const std::string& path, const ExperimentConfig& cfg) {
  if (!fs::exists(path)) {
    throw IoError("dataset file " + path + " not found; run 'tpgf generate' with this config first (data_dir = " +
                  cfg.data_path() + ")");
  }
  return path;
}

void check_generated_with(const ExperimentConfig& cfg) {
  const std::string echo = require_file(join_path(cfg.data_path(), "config.echo"), cfg);
  const ExperimentConfig gen = parse_config(echo);
  for (const char* key : kDataKeys) {
    const std::string want = config_value(cfg, key);
    const std::string have = config_value(gen, key);
    if (want != have) {
      throw ConfigError("dataset in " + cfg.data_path() + " was generated with " + key + " = " + have +
                        " but the config has " + key + " = " + want + "; rerun 'tpgf generate'");
    }
  }
}

std::string default_checkpoint(const ExperimentConfig& cfg) {
  return join_path(cfg.run_path(), cfg.train.schedule.strategy == Strategy::Tpg ? "m2.ckpt" : "model.ckpt");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

TrainData build_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  TrainData data;
  if (cfg.dataset == "sprites") {
    const auto counts = sprite_counts(cfg);
    const SpriteBank bank = sprite_bank(cfg);
    std::vector<SeqTensord> seqs;
    for (Index i = 0; i < cfg.sequences; ++i) seqs.push_back(gen_moving_sprites(cfg.sprite_config(i), bank));
    auto samples = frame_samples(seqs, cfg);
    data.train.assign(samples.begin(), samples.begin() + counts.train);
    data.val.assign(samples.begin() + counts.train, samples.begin() + counts.train + counts.val);
    data.test.assign(samples.begin() + counts.train + counts.val, samples.end());
    data.meta = frame_meta(cfg);
    return data;
  }
  const SeqTensord series = gen_multinode_series(cfg.multinode());
  Splits s = split(windowize(series, cfg.input_steps, cfg.horizon, cfg.stride, cfg.target_channels), cfg.fractions());
  data.train = std::move(s.train);
  data.val = std::move(s.val);
  data.test = std::move(s.test);
  finish_normalization(data, cfg.target_channels, s.dropped_boundary_windows);
  return data;
}

void cmd_generate(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const std::string dir = cfg.data_path();
  make_dir(dir);
  Index n_train = 0, n_val = 0, n_test = 0, dropped = 0;
  if (cfg.dataset == "sprites") {
    const auto counts = sprite_counts(cfg);
    const SpriteBank bank = sprite_bank(cfg);
    Index next = 0;
    auto emit = [&](const char* name, Index count) {
      FrameSet fs{cfg.grid_h, cfg.grid_w, {}};
      for (Index k = 0; k < count; ++k) fs.sequences.push_back(gen_moving_sprites(cfg.sprite_config(next++), bank));
      write_frames(join_path(dir, name), fs);
    };
    emit("train.frames", counts.train);
    emit("val.frames", counts.val);
    emit("test.frames", counts.test);
    n_train = counts.train;
    n_val = counts.val;
    n_test = counts.test;
  } else {
    const SeqTensord series = gen_multinode_series(cfg.multinode());
    const Splits s =
        split(windowize(series, cfg.input_steps, cfg.horizon, cfg.stride, cfg.target_channels), cfg.fractions());
    write_csv(series, join_path(dir, "series.csv"));
    const Index window = cfg.input_steps + cfg.horizon;
    auto emit = [&](const char* name, const std::vector<Sample>& part) {
      if (part.empty()) return;
      const auto [from, to] = span_of(part, window);
      std::vector<Index> times;
      for (Index t = from; t < to; ++t) times.push_back(t);
      write_csv(slice_time(series, std::span<const Index>(times)), join_path(dir, name), from);
    };
    emit("train.csv", s.train);
    emit("val.csv", s.val);
    emit("test.csv", s.test);
    n_train = static_cast<Index>(s.train.size());
    n_val = static_cast<Index>(s.val.size());
    n_test = static_cast<Index>(s.test.size());
    dropped = s.dropped_boundary_windows;
  }
  std::ostringstream meta;
  meta << "dataset = " << cfg.dataset << "\ntrain_samples = " << n_train << "\nval_samples = " << n_val
       << "\ntest_samples = " << n_test << "\ndropped_boundary_windows = " << dropped << "\n";
  write_text(join_path(dir, "meta.txt"), meta.str());
  write_text(join_path(dir, "config.echo"), echo_config(cfg));
  log << "generated " << cfg.dataset << " in " << dir << ": train " << n_train << ", val " << n_val << ", test "
      << n_test << " samples, " << dropped << " boundary windows dropped\n";
}

TrainData load_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  check_generated_with(cfg);
  const std::string dir = cfg.data_path();
  TrainData data;
  if (cfg.dataset == "sprites") {
    auto read = [&](const char* name) {
      const FrameSet fs = read_frames(require_file(join_path(dir, name), cfg));
      if (fs.height != cfg.grid_h || fs.width != cfg.grid_w) throw FormatError(std::string(name) + ": grid mismatch");
      return frame_samples(fs.sequences, cfg);
    };
    data.train = read("train.frames");
    data.val = read("val.frames");
    data.test = read("test.frames");
    data.meta = frame_meta(cfg);
    return data;
  }
  Index dropped = 0;
  {
    std::ifstream is(require_file(join_path(dir, "meta.txt"), cfg));
    std::string line;
    while (std::getline(is, line)) {
      if (line.rfind("dropped_boundary_windows = ", 0) == 0) dropped = std::stoll(line.substr(27));
    }
  }
  auto read = [&](const char* name) -> std::vector<Sample> {
    const std::string path = join_path(dir, name);
    if (!fs::exists(path)) return {};
    Index offset = 0;
    const SeqTensord seg = load_csv(path, &offset);
    return windowize(seg, cfg.input_steps, cfg.horizon, cfg.stride, cfg.target_channels, offset);
  };
  require_file(join_path(dir, "train.csv"), cfg);
  data.train = read("train.csv");
  data.val = read("val.csv");
  data.test = read("test.csv");
  finish_normalization(data, cfg.target_channels, dropped);
  return data;
}

void cmd_train(const ExperimentConfig& cfg_in, std::ostream& log) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  TrainData data = load_dataset(cfg);
  cfg.train.threads = threads_from_env();
  const std::string dir = cfg.run_path();
  make_dir(dir);
  write_text(join_path(dir, "config.echo"), echo_config(cfg));

  const CheckpointHook hook = [&](const std::string& stage, const Seq2SeqParams& p) {
    save_checkpoint(join_path(dir, stage + ".ckpt"), p);
  };
  if (cfg.train.schedule.strategy == Strategy::Tpg) {
    const TpgResult r = train_tpg(data, cfg.train, hook);
    save_checkpoint(join_path(dir, "m1.ckpt"), r.m1.best_params);
    save_checkpoint(join_path(dir, "m2.ckpt"), r.m2.best_params);
    write_curves_csv(r.curves, join_path(dir, "curves.csv"));
    log << "trained tpg in " << dir << ": m1 best val loss " << fmt(r.m1.best_val_loss) << " at iter "
        << r.m1.best_iter << ", m2 best val loss " << fmt(r.m2.best_val_loss) << " at iter " << r.m2.best_iter << "\n";
  } else {
    const TrainResult r = train_scheduled(data, cfg.train, std::nullopt, hook);
    save_checkpoint(join_path(dir, "model.ckpt"), r.best_params);
    write_curves_csv(r.curves, join_path(dir, "curves.csv"));
    log << "trained " << to_string(cfg.train.schedule.strategy) << " in " << dir << ": best val loss "
        << fmt(r.best_val_loss) << " at iter " << r.best_iter << "\n";
  }
}

EvalReport cmd_evaluate(const ExperimentConfig& cfg, const std::optional<std::string>& checkpoint, std::ostream& log) {
  cfg.validate();
  const std::string path = checkpoint.value_or(default_checkpoint(cfg));
  if (!fs::exists(path)) throw IoError("checkpoint " + path + " not found; run 'tpgf train' first");
  const Seq2SeqParams p = load_checkpoint(path);
  const TrainData data = load_dataset(cfg);
  const ModelLayout layout = data.layout();
  if (!(p.layout == layout)) {
    throw DimensionError("checkpoint " + path + " expects " + std::to_string(p.layout.nodes) + " nodes x " +
                         std::to_string(p.layout.channels) + " channels with " +
                         std::to_string(p.layout.target_channels.size()) + " targets; dataset has " +
                         std::to_string(layout.nodes) + " x " + std::to_string(layout.channels) + " with " +
                         std::to_string(layout.target_channels.size()));
  }
  const EvalReport report = evaluate(p, data.test, data.meta, threads_from_env());
  const std::string dir = cfg.run_path();
  make_dir(dir);
  write_eval_csv(eval_rows(report, data.meta), join_path(dir, "metrics.csv"));
  log << "evaluated " << path << " on " << report.samples << " test samples: rmse " << fmt(report.errors.rmse_all)
      << ", mae " << fmt(report.errors.mae_all);
  if (!report.ssim_by_step.empty()) log << ", ssim " << fmt(report.ssim) << ", mse " << fmt(report.mse);
  log << "\n";
  return report;
}

std::string ComparisonTable::to_csv() const {
  std::string out = "run";
  for (const auto& c : columns) out += "," + c;
  out += "\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    out += runs[r];
    for (double v : values[r]) {
      char buf[64];
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  out += "best";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    std::string names;
    for (std::size_t r = 0; r < runs.size(); ++r)
      if (best[r][c]) names += (names.empty() ? "" : ";") + runs[r];
    out += "," + names;
  }
  return out + "\n";
}

std::string ComparisonTable::to_text() const {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"run"});
  for (const auto& c : columns) cells.back().push_back(c);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    cells.push_back({runs[r]});
    for (std::size_t c = 0; c < columns.size(); ++c) cells.back().push_back(fmt(values[r][c]) + (best[r][c] ? "*" : ""));
  }
  std::vector<std::size_t> width(columns.size() + 1, 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::string cell = row[c];
      if (c == 0) cell.resize(width[c], ' ');
      else cell.insert(0, width[c] - cell.size(), ' ');
      out += (c ? "  " : "") + cell;
    }
    out += "\n";
  }
  return out + "* best in column\n";
}

ComparisonTable compare_runs(const std::vector<ExperimentConfig>& cfgs) {
  if (cfgs.size() < 2) throw ConfigError("compare needs at least two configs");
  ComparisonTable t;
  for (const auto& cfg : cfgs) {
    const std::string name = cfg.effective_run_name();
    const std::string path = join_path(cfg.run_path(), "metrics.csv");
    if (!fs::exists(path)) throw IoError("run '" + name + "': missing evaluation file " + path);
    std::vector<std::string> cols;
    std::vector<double> vals;
    for (const auto& row : read_eval_csv(path)) {
      if (row.step != 0) continue;
      if (row.metric != "rmse" && row.metric != "mae" && row.metric != "ssim" && row.metric != "mse") continue;
      cols.push_back(row.metric + ":" + row.channel);
      vals.push_back(row.value);
    }
    if (t.runs.empty()) {
      t.columns = cols;
    } else if (cols != t.columns) {
      throw ConfigError("run '" + name + "' reports different metrics than run '" + t.runs.front() + "'");
    }
    t.runs.push_back(name);
    t.values.push_back(std::move(vals));
  }
  t.best.assign(t.runs.size(), std::vector<bool>(t.columns.size(), false));
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    const bool higher = t.columns[c].rfind("ssim", 0) == 0;
    double target = t.values[0][c];
    for (std::size_t r = 1; r < t.runs.size(); ++r)
      target = higher ? std::max(target, t.values[r][c]) : std::min(target, t.values[r][c]);
    for (std::size_t r = 0; r < t.runs.size(); ++r) t.best[r][c] = t.values[r][c] == target;
  }
  return t;
}

ComparisonTable cmd_compare(const std::vector<ExperimentConfig>& cfgs, const std::optional<std::string>& out_dir,
                            std::ostream& log) {
  ComparisonTable t = compare_runs(cfgs);
  const std::string dir = out_dir.value_or(cfgs.front().out_dir);
  make_dir(dir);
  write_text(join_path(dir, "compare.csv"), t.to_csv());
  const std::string text = t.to_text();
  write_text(join_path(dir, "compare.txt"), text);
  log << text;
  return t;
}

int run_command(const CommandLine& cl, std::ostream& log, std::ostream& err) {
  try {
    std::vector<ExperimentConfig> cfgs;
    for (const auto& path : cl.configs) {
      ExperimentConfig cfg = parse_config(path);
      if (cl.seed) cfg.train.seed = *cl.seed;
      if (cl.out && cl.command != "compare") cfg.out_dir = *cl.out;
      cfg.validate();
      cfgs.push_back(std::move(cfg));
    }
    if (cfgs.empty()) throw ConfigError("--config is required");
    if (cl.command != "compare" && cfgs.size() != 1) throw ConfigError(cl.command + " takes exactly one --config");
    if (cl.checkpoint && cl.command != "evaluate") throw ConfigError("--checkpoint only applies to evaluate");

    if (cl.command == "generate") cmd_generate(cfgs.front(), log);
    else if (cl.command == "train") cmd_train(cfgs.front(), log);
    else if (cl.command == "evaluate") cmd_evaluate(cfgs.front(), cl.checkpoint, log);
    else if (cl.command == "compare") cmd_compare(cfgs, cl.out, log);
    else throw ConfigError("unknown command '" + cl.command + "'");
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace tpgf
