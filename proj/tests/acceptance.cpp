// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "tpgf/commands.hpp"

using namespace tpgf;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kScheduleTol = 1e-12;
constexpr int kSweepPoints = 10'000;
constexpr double kGradStep = 1e-6;
constexpr double kGradTol = 1e-5;
constexpr int kDraws = 10'000;
constexpr double kSigmas = 3.0;
constexpr double kMetricTol = 1e-12;
constexpr double kFastBudget = 1.0;     // seconds
constexpr double kGradBudget = 30.0;
constexpr double kDeskBudget = 600.0;
constexpr double kSpriteBudget = 600.0;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};
constexpr int kMajority = 2;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---- 1 -----------------------------------------------------------------------------

Outcome schedules() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0;
  for (double lambda : {2.0, 10.0, 200.0, 1000.0, 3000.0}) {
    worst = std::max(worst, std::abs(inverse_sigmoid_epsilon(0, lambda) - lambda / (lambda + 1)));
    worst = std::max(worst, std::abs(inverse_sigmoid_epsilon(lambda * std::log(lambda), lambda) - 0.5));
    for (std::int64_t v : {2, 5, 12}) {
      worst = std::max(worst, std::abs(index_aware_epsilon(0, v, lambda) - lambda / (lambda + 1)));
      const double i = lambda * std::log(lambda) / std::log(static_cast<double>(v));
      worst = std::max(worst, std::abs(index_aware_epsilon(i, v, lambda) - 0.5));
    }
  }
  if (worst > kScheduleTol) {
    o.pass = false;
    o.detail += "closed-form error " + fmt(worst) + "; ";
  }

  int violations = 0;
  const double lambda = 500;
  double prev = inverse_sigmoid_epsilon(0, lambda);
  for (int i = 1; i < kSweepPoints; ++i) {
    const double e = inverse_sigmoid_epsilon(i, lambda);
    if (!(e <= prev) || e < 0 || e > 1) ++violations;
    for (std::int64_t v = 2; v < 12; ++v) {
      const double a = index_aware_epsilon(i, v, lambda), b = index_aware_epsilon(i, v + 1, lambda);
      if (!(b <= a) || !(a <= index_aware_epsilon(i - 1, v, lambda))) ++violations;
    }
    prev = e;
  }
  if (violations) {
    o.pass = false;
    o.detail += std::to_string(violations) + " monotonicity violations; ";
  }
  const double s = seconds_since(t0);
  if (s >= kFastBudget) o.pass = false;
  o.detail += "max closed-form error " + fmt(worst) + ", " + std::to_string(kSweepPoints) + "-point sweep, " + fmt(s) + " s";
  return o;
}

// ---- 2 -----------------------------------------------------------------------------

Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_where;
  const std::pair<testing::Feed, const char*> feeds[] = {
      {testing::Feed::Teacher, "teacher-forced"}, {testing::Feed::Sampled, "sampled"}, {testing::Feed::Closed, "closed-loop"}};
  for (Index hidden : {1, 8}) {
    const auto fx = testing::make_fixture(hidden, 3, 3, 4, 100 + static_cast<std::uint64_t>(hidden));
    for (const auto& [feed, label] : feeds) {
      for (const auto& c : testing::check_gradients(fx, feed, kGradStep)) {
        if (!(c.rel_error <= worst)) {
          worst = c.rel_error;
          worst_where = std::to_string(hidden) + "-unit " + label + " " + c.name;
        }
      }
    }
  }
  const double s = seconds_since(t0);
  o.pass = worst < kGradTol && s < kGradBudget;
  o.detail = "worst relative error " + fmt(worst) + " (" + worst_where + "), " + fmt(s) + " s";
  return o;
}

// ---- 3 -----------------------------------------------------------------------------

Outcome sampling_statistics() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(2024);
  for (double eps : {0.1, 0.5, 0.9}) {
    int ones = 0;
    for (int k = 0; k < kDraws; ++k) ones += draw_tau(eps, rng).tau;
    const double sd = std::sqrt(kDraws * eps * (1 - eps));
    const double z = (ones - kDraws * eps) / sd;
    if (std::abs(z) > kSigmas) o.pass = false;
    o.detail += "eps " + fmt(eps) + ": " + std::to_string(ones) + " (z " + fmt(z) + "); ";
  }
  const double s = seconds_since(t0);
  if (s >= kFastBudget) o.pass = false;
  o.detail += fmt(s) + " s";
  return o;
}

// ---- 4 -----------------------------------------------------------------------------

Outcome subsampling() {
  Outcome o;
  const auto [odd, even] = subsample_odd_even(SeqTensord({37, 2, 1}));
  o.pass = odd.time_steps() == 19 && even.time_steps() == 18;
  Rng rng(4);
  int failures = 0;
  for (Index t = 1; t <= 100; ++t) {
    const auto seq = randn({t, 3, 2}, 1.0, rng);
    const auto [a, b] = subsample_odd_even(seq);
    const auto back = interleave_odd_even(a, b);
    if (!(back.shape() == seq.shape()) ||
        std::memcmp(back.data().data(), seq.data().data(), sizeof(double) * static_cast<std::size_t>(seq.size())) != 0) {
      ++failures;
    }
  }
  o.pass = o.pass && failures == 0;
  o.detail = "T=37 -> " + std::to_string(odd.time_steps()) + "/" + std::to_string(even.time_steps()) + ", " +
             std::to_string(failures) + " round-trip mismatches for T in [1, 100]";
  return o;
}

// ---- 5 -----------------------------------------------------------------------------

Outcome metric_oracles() {
  Outcome o;
  std::vector<std::string> bad;
  auto expect = [&](const char* what, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) bad.push_back(std::string(what) + " " + fmt(got) + " != " + fmt(want));
  };
  const SeqTensord p({2, 2}, {1, -2, 3, 0.5});
  const SeqTensord t({2, 2}, {0, 0, 1, 0.5});
  // errors 1, -2, 2, 0
  expect("rmse", rmse(p, t), 1.5, kMetricTol);
  expect("mae", mae(p, t), 1.25, kMetricTol);
  expect("mse", mse(p, t), 2.25, kMetricTol);
  const auto per = mse_per_frame(p, t);
  expect("mse frame 0", per[0], 2.5, kMetricTol);
  expect("mse frame 1", per[1], 2.0, kMetricTol);

  Eigen::MatrixXd img(16, 16);
  for (Index r = 0; r < 16; ++r)
    for (Index c = 0; c < 16; ++c) img(r, c) = 0.5 + 0.4 * std::sin(0.3 * static_cast<double>(r * c));
  expect("ssim identical", ssim(img, img), 1.0, kMetricTol);

  const double c1 = 1e-4;
  for (auto [x, y] : {std::pair{0.2, 0.7}, std::pair{0.0, 1.0}, std::pair{0.9, 0.9}, std::pair{0.05, 0.6}}) {
    const double closed = (2 * x * y + c1) / (x * x + y * y + c1);
    expect("ssim constant", ssim(Eigen::MatrixXd::Constant(16, 16, x), Eigen::MatrixXd::Constant(16, 16, y)), closed,
           kMetricTol);
  }
  o.pass = bad.empty();
  if (o.pass) {
    o.detail = "rmse/mae/mse fixtures, ssim identity and constant-frame closed form within " + fmt(kMetricTol);
  } else {
    for (const auto& b : bad) o.detail += b + "; ";
  }
  return o;
}

// ---- 6 -----------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "tpgf_acceptance_determinism";
  std::ostringstream log;
  auto run_all = [&] {
    fs::remove_all(root);
    std::vector<ExperimentConfig> cfgs;
    for (const char* strategy : {"teacher_forcing", "scheduled_sampling", "tpg"}) {
      ExperimentConfig cfg = parse_config_text("nodes = 4\nchannels = 3\ntarget_channels = 0, 2\nseries_length = 300\n"
                                               "input_steps = 8\nhorizon = 6\nhidden_size = 8\nbatch_size = 8\n"
                                               "total_iters = 120\nstage1_iters = 40\ntransition_iters = 40\n"
                                               "lambda = 30\nval_every = 20\nseed = 7\nstrategy = " +
                                               std::string(strategy) + "\nout_dir = " + root.string() + "\n");
      cmd_generate(cfg, log);
      cmd_train(cfg, log);
      cmd_evaluate(cfg, std::nullopt, log);
      cfgs.push_back(cfg);
    }
    cmd_compare(cfgs, std::nullopt, log);

    ExperimentConfig sprites = parse_config_text("dataset = sprites\nsequences = 12\ngrid_h = 8\ngrid_w = 8\n"
                                                 "sprite_size = 3\ninput_steps = 4\nhorizon = 4\nhidden_size = 6\n"
                                                 "batch_size = 4\ntotal_iters = 20\nval_every = 10\nseed = 7\n"
                                                 "data_dir = frames\nout_dir = " + (root / "sprites").string() + "\n");
    cmd_generate(sprites, log);
    cmd_train(sprites, log);
    cmd_evaluate(sprites, std::nullopt, log);
    return snapshot(root);
  };
  const auto first = run_all();
  const auto second = run_all();
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) differing.push_back(name);
  }
  if (second.size() != first.size()) differing.push_back("(file set)");
  std::size_t csvs = 0, ckpts = 0;
  for (const auto& [name, _] : first) {
    csvs += name.ends_with(".csv");
    ckpts += name.ends_with(".ckpt");
  }
  o.pass = differing.empty() && csvs > 0 && ckpts > 0;
  o.detail = std::to_string(first.size()) + " files (" + std::to_string(csvs) + " csv, " + std::to_string(ckpts) +
             " checkpoints) from generate/train/evaluate/compare";
  for (const auto& d : differing) o.detail += "; differs: " + d;
  fs::remove_all(root);
  return o;
}

// ---- 7, 8, 9 -----------------------------------------------------------------------

// Desk fixture: N=10, F=9, 3 targets, T_in=24, K=12, C=32, 2000 iterations.
ExperimentConfig desk_config(Strategy strategy, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.nodes = 10;
  cfg.channels = 9;
  cfg.target_channels = {0, 1, 2};
  cfg.input_steps = 24;
  cfg.horizon = 12;
  cfg.train.hidden_size = 32;
  cfg.train.total_iters = 2000;
  cfg.train.seed = seed;
  cfg.train.schedule.strategy = strategy;
  cfg.train.schedule.lambda = 200;
  cfg.train.schedule.stage1_iters = 400;
  cfg.train.schedule.transition_iters = 1600;
  cfg.train.val_every = 50;
  cfg.validate();
  return cfg;
}

struct SeedResult {
  EvalReport tf, ss, tpg;
  std::vector<MetricsRow> ss_curves, tpg_curves;
};

std::vector<SeedResult> desk_results;
double desk_seconds = 0;

void run_desk_experiment() {
  const auto t0 = Clock::now();
  for (std::uint64_t seed : kSeeds) {
    SeedResult r;
    const TrainData data = build_dataset(desk_config(Strategy::ScheduledSampling, seed));
    const auto tf = train_scheduled(data, desk_config(Strategy::TeacherForcing, seed).train);
    r.tf = evaluate(tf.best_params, data.test, data.meta);
    const auto ss = train_scheduled(data, desk_config(Strategy::ScheduledSampling, seed).train);
    r.ss = evaluate(ss.best_params, data.test, data.meta);
    r.ss_curves = ss.curves;
    const auto tpg = train_tpg(data, desk_config(Strategy::Tpg, seed).train);
    r.tpg = evaluate(tpg.m2.best_params, data.test, data.meta);
    r.tpg_curves = tpg.curves;
    desk_results.push_back(std::move(r));
    std::printf("  seed %llu: rmse tf %s, ss %s, tpg %s\n", static_cast<unsigned long long>(seed),
                fmt(desk_results.back().tf.errors.rmse_all).c_str(), fmt(desk_results.back().ss.errors.rmse_all).c_str(),
                fmt(desk_results.back().tpg.errors.rmse_all).c_str());
    std::fflush(stdout);
  }
  desk_seconds = seconds_since(t0);
}

Outcome ordering() {
  Outcome o;
  int tpg_le_ss = 0, both_beat_tf = 0;
  for (const auto& r : desk_results) {
    const double tf = r.tf.errors.rmse_all, ss = r.ss.errors.rmse_all, tpg = r.tpg.errors.rmse_all;
    tpg_le_ss += tpg <= ss;
    both_beat_tf += tpg < tf && ss < tf;
  }
  o.pass = tpg_le_ss >= kMajority && both_beat_tf >= kMajority && desk_seconds < kDeskBudget;
  o.detail = "TPG <= SS in " + std::to_string(tpg_le_ss) + "/3 seeds, TPG and SS beat TF in " +
             std::to_string(both_beat_tf) + "/3, " + fmt(desk_seconds) + " s";
  return o;
}

// First validation iteration at or below `level`, or -1.
std::int64_t first_reaching(const std::vector<MetricsRow>& curves, const std::string& metric, double level) {
  for (const auto& row : curves)
    if (row.split == "val" && row.metric == metric && row.value <= level) return row.iter;
  return -1;
}

Outcome convergence() {
  Outcome o;
  int faster = 0;
  std::string per_seed;
  for (const auto& r : desk_results) {
    double level = 0;
    for (const auto& row : r.ss_curves)
      if (row.split == "val" && row.metric == "loss") level = row.value;  // last one: iteration 2000
    const std::int64_t ss_iter = first_reaching(r.ss_curves, "loss", level);
    const std::int64_t m1_iter = first_reaching(r.tpg_curves, "m1_loss", level);
    faster += m1_iter >= 0 && m1_iter < ss_iter;
    per_seed += " " + std::to_string(m1_iter) + " vs " + std::to_string(ss_iter) + ";";
  }
  o.pass = faster >= kMajority;
  o.detail = "M1 reaches the SS final validation loss first in " + std::to_string(faster) + "/3 seeds (M1 vs SS iter:" +
             per_seed + ")";
  return o;
}

Outcome horizon_growth() {
  Outcome o;
  int monotone_models = 0, total_models = 0, tpg_flatter = 0;
  std::string ratios;
  auto ratio = [](const EvalReport& e) { return e.rmse_by_step.back() / e.rmse_by_step.front(); };
  for (const auto& r : desk_results) {
    for (const EvalReport* e : {&r.tf, &r.ss, &r.tpg}) {
      ++total_models;
      monotone_models += e->rmse_by_step.back() >= e->rmse_by_step.front();
    }
    tpg_flatter += ratio(r.tpg) <= ratio(r.ss);
    ratios += " " + fmt(ratio(r.tpg)) + " vs " + fmt(ratio(r.ss)) + ";";
  }
  o.pass = monotone_models == total_models && tpg_flatter >= kMajority;
  o.detail = std::to_string(monotone_models) + "/" + std::to_string(total_models) +
             " models with step-K RMSE >= step-1, TPG ratio <= SS in " + std::to_string(tpg_flatter) +
             "/3 seeds (TPG vs SS:" + ratios + ")";
  return o;
}

// ---- 10 ----------------------------------------------------------------------------

Outcome sprite_pipeline() {
  Outcome o;
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "tpgf_acceptance_sprites";
  fs::remove_all(root);
  ExperimentConfig cfg;
  cfg.dataset = "sprites";
  cfg.grid_h = cfg.grid_w = 16;
  cfg.sprites = 2;
  cfg.sprite_size = 5;
  cfg.speed_min = cfg.speed_max = 1;
  cfg.sequences = 1000;
  cfg.input_steps = 20;
  cfg.horizon = 20;
  // A linear readout needs about one hidden unit per sprite position (12 x 12).
  cfg.train.hidden_size = 160;
  cfg.train.learning_rate = 3e-3;
  cfg.train.total_iters = 1000;
  cfg.train.schedule.lambda = 100;
  cfg.out_dir = root.string();
  cfg.validate();
  std::ostringstream log;
  cmd_generate(cfg, log);
  cmd_train(cfg, log);
  const EvalReport r = cmd_evaluate(cfg, std::nullopt, log);
  const double s = seconds_since(t0);
  const bool per_frame = static_cast<Index>(r.ssim_by_step.size()) == cfg.horizon;
  o.pass = per_frame && r.ssim > r.ssim_zero && s < kSpriteBudget;
  o.detail = "SSIM " + fmt(r.ssim) + " vs zero-frame " + fmt(r.ssim_zero) + " over " + std::to_string(r.ssim_by_step.size()) +
             " steps, " + fmt(s) + " s";
  fs::remove_all(root);
  return o;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"scheduler exactness", schedules},
      {"gradient correctness", gradients},
      {"sampling statistics", sampling_statistics},
      {"odd/even subsampling", subsampling},
      {"metric oracles", metric_oracles},
      {"determinism", determinism},
      {"desk-scale ordering", [] {
         run_desk_experiment();
         return ordering();
       }},
      {"convergence speed", convergence},
      {"horizon degradation", horizon_growth},
      {"sprite pipeline", sprite_pipeline},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
