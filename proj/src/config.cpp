#include "tpgf/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace tpgf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct KeyError {
  std::string message;
};

std::int64_t as_int(const std::string& v) {
  std::int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw KeyError{"expected an integer, got '" + v + "'"};
  return out;
}

std::uint64_t as_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw KeyError{"expected an unsigned integer, got '" + v + "'"};
  }
  return out;
}

double as_double(const std::string& v) {
  if (v.empty()) throw KeyError{"expected a number, got ''"};
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (*end != '\0' || !std::isfinite(out)) throw KeyError{"expected a finite number, got '" + v + "'"};
  return out;
}

bool as_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw KeyError{"expected true or false, got '" + v + "'"};
}

std::vector<Index> as_index_list(const std::string& v) {
  std::vector<Index> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(as_int(trim(item)));
  if (out.empty()) throw KeyError{"expected a comma-separated list of integers"};
  return out;
}

Index at_least(std::int64_t v, std::int64_t lo) {
  if (v < lo) throw KeyError{"must be >= " + std::to_string(lo) + ", got " + std::to_string(v)};
  return v;
}

double positive(double v) {
  if (!(v > 0.0)) throw KeyError{"must be > 0, got " + fmt_double(v)};
  return v;
}

double non_negative(double v) {
  if (v < 0.0) throw KeyError{"must be >= 0, got " + fmt_double(v)};
  return v;
}

double unit_interval(double v) {
  if (v < 0.0 || v > 1.0) throw KeyError{"must lie in [0, 1], got " + fmt_double(v)};
  return v;
}

double open_unit(double v) {
  if (!(v > 0.0 && v < 1.0)) throw KeyError{"must lie in (0, 1), got " + fmt_double(v)};
  return v;
}

std::string no_space(const std::string& v) {
  if (v.find_first_of(" \t") != std::string::npos) throw KeyError{"must not contain whitespace"};
  return v;
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string join(const std::vector<Index>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + std::to_string(v[k]);
  return out;
}

#define TPGF_INT(key, field, lo)                                                   \
  Key {                                                                            \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = at_least(as_int(v), lo); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }          \
  }
#define TPGF_REAL(key, field, check)                                                \
  Key {                                                                             \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = check(as_double(v)); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.field); }               \
  }
#define TPGF_TEXT(key, field)                                                     \
  Key {                                                                           \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = no_space(v); }, \
        [](const ExperimentConfig& c) { return c.field; }                         \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"dataset",
          [](ExperimentConfig& c, const std::string& v) {
            if (v != "multinode" && v != "sprites") throw KeyError{"expected multinode or sprites, got '" + v + "'"};
            c.dataset = v;
          },
          [](const ExperimentConfig& c) { return c.dataset; }},
      TPGF_INT("nodes", nodes, 1),
      TPGF_INT("channels", channels, 1),
      Key{"target_channels",
          [](ExperimentConfig& c, const std::string& v) {
            auto list = as_index_list(v);
            for (Index t : list) at_least(t, 0);
            c.target_channels = std::move(list);
          },
          [](const ExperimentConfig& c) { return join(c.target_channels); }},
      TPGF_INT("series_length", series_length, 2),
      TPGF_REAL("coupling", coupling, unit_interval),
      TPGF_REAL("noise", noise, non_negative),
      TPGF_INT("grid_h", grid_h, 1),
      TPGF_INT("grid_w", grid_w, 1),
      TPGF_INT("sprites", sprites, 0),
      TPGF_INT("sprite_size", sprite_size, 1),
      TPGF_INT("speed_min", speed_min, 0),
      TPGF_INT("speed_max", speed_max, 0),
      TPGF_INT("sequences", sequences, 1),
      TPGF_TEXT("idx_path", idx_path),
      TPGF_INT("input_steps", input_steps, 1),
      TPGF_INT("horizon", horizon, 1),
      TPGF_INT("stride", stride, 1),
      TPGF_REAL("train_frac", train_frac, unit_interval),
      TPGF_REAL("val_frac", val_frac, unit_interval),
      TPGF_REAL("test_frac", test_frac, unit_interval),
      TPGF_INT("hidden_size", train.hidden_size, 1),
      Key{"strategy", [](ExperimentConfig& c, const std::string& v) {
            try {
              c.train.schedule.strategy = parse_strategy(v);
            } catch (const ConfigError& e) {
              throw KeyError{e.what()};
            }
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.schedule.strategy)); }},
      TPGF_REAL("lambda", train.schedule.lambda, positive),
      TPGF_REAL("m1_lambda", train.schedule.m1_lambda, non_negative),
      Key{"index_aware", [](ExperimentConfig& c, const std::string& v) { c.train.schedule.index_aware = as_bool(v); },
          [](const ExperimentConfig& c) { return std::string(c.train.schedule.index_aware ? "true" : "false"); }},
      TPGF_INT("stage1_iters", train.schedule.stage1_iters, 0),
      TPGF_INT("transition_iters", train.schedule.transition_iters, 1),
      TPGF_REAL("learning_rate", train.learning_rate, positive),
      TPGF_INT("batch_size", train.batch_size, 1),
      TPGF_INT("total_iters", train.total_iters, 0),
      TPGF_REAL("clip_norm", train.clip_norm, positive),
      TPGF_REAL("beta1", train.beta1, open_unit),
      TPGF_REAL("beta2", train.beta2, open_unit),
      TPGF_REAL("adam_epsilon", train.adam_epsilon, positive),
      TPGF_REAL("init_scale", train.init_scale, positive),
      Key{"warm_start_m2", [](ExperimentConfig& c, const std::string& v) { c.train.warm_start_m2 = as_bool(v); },
          [](const ExperimentConfig& c) { return std::string(c.train.warm_start_m2 ? "true" : "false"); }},
      Key{"seed", [](ExperimentConfig& c, const std::string& v) { c.train.seed = as_uint(v); },
          [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }},
      TPGF_INT("val_every", train.val_every, 1),
      TPGF_TEXT("out_dir", out_dir),
      TPGF_TEXT("data_dir", data_dir),
      TPGF_TEXT("run_name", run_name),
  };
  return table;
}

#undef TPGF_INT
#undef TPGF_REAL
#undef TPGF_TEXT

}  // namespace

std::string ExperimentConfig::data_path() const { return (std::filesystem::path(out_dir) / data_dir).string(); }

std::string ExperimentConfig::effective_run_name() const {
  return run_name.empty() ? std::string(to_string(train.schedule.strategy)) : run_name;
}

std::string ExperimentConfig::run_path() const { return (std::filesystem::path(out_dir) / effective_run_name()).string(); }

MultinodeConfig ExperimentConfig::multinode() const {
  MultinodeConfig m;
  m.nodes = nodes;
  m.channels = channels;
  m.length = series_length;
  m.coupling = coupling;
  m.noise = noise;
  m.seed = seed();
  return m;
}

SpriteConfig ExperimentConfig::sprite_config(Index index) const {
  SpriteConfig s;
  s.height = grid_h;
  s.width = grid_w;
  s.num_sprites = sprites;
  s.sprite_size = sprite_size;
  s.speed_min = speed_min;
  s.speed_max = speed_max;
  s.length = input_steps + horizon;
  Rng stream = Rng(seed()).split(static_cast<std::uint64_t>(index) + 1);
  s.seed = stream.next_u64();
  return s;
}

void ExperimentConfig::validate() const {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("train_frac + val_frac + test_frac must sum to 1, got " +
                      fmt_double(train_frac + val_frac + test_frac));
  }
  if (dataset == "multinode") {
    for (Index t : target_channels) {
      if (t >= channels) {
        throw ConfigError("target_channels: channel " + std::to_string(t) + " out of range for channels = " +
                          std::to_string(channels));
      }
    }
    for (std::size_t a = 0; a < target_channels.size(); ++a)
      for (std::size_t b = a + 1; b < target_channels.size(); ++b)
        if (target_channels[a] == target_channels[b]) throw ConfigError("target_channels: duplicate channel");
    if (series_length < input_steps + horizon) {
      throw ConfigError("series_length must be >= input_steps + horizon");
    }
  } else {
    if (speed_max < speed_min) throw ConfigError("speed_max must be >= speed_min");
    if (idx_path.empty() && (sprite_size > grid_h || sprite_size > grid_w)) {
      throw ConfigError("sprite_size " + std::to_string(sprite_size) + " does not fit the grid");
    }
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  const std::filesystem::path dp(data_dir);
  if (data_dir.empty() || dp.is_absolute()) throw ConfigError("data_dir must be a relative path under out_dir");
  for (const auto& part : dp)
    if (part == "..") throw ConfigError("data_dir must stay under out_dir");
  if (effective_run_name() == data_dir) throw ConfigError("run_name must differ from data_dir");
  train.validate();
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  std::vector<std::string> seen;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Key* entry = nullptr;
    for (const auto& k : keys())
      if (key == k.name) entry = &k;
    if (!entry) throw ConfigError(where + ": unknown key '" + key + "'");
    for (const auto& s : seen)
      if (s == key) throw ConfigError(where + ": key '" + key + "' set twice");
    seen.push_back(key);
    try {
      entry->set(cfg, value);
    } catch (const KeyError& e) {
      throw ConfigError(where + ": key '" + key + "': " + e.message);
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

std::string config_value(const ExperimentConfig& cfg, const std::string& key) {
  for (const auto& k : keys())
    if (key == k.name) return k.get(cfg);
  throw ConfigError("unknown key '" + key + "'");
}

}  // namespace tpgf
