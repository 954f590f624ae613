#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tpgf/data.hpp"
#include "tpgf/metrics.hpp"
#include "tpgf/model.hpp"
#include "tpgf/rng.hpp"
#include "tpgf/sampling.hpp"

namespace tpgf {

// ---- loss ----------------------------------------------------------------------

struct LossResult {
  double total = 0.0;
  std::vector<double> per_channel;
};

/// Sum over target channels of the per-channel MSE; `pred`, `target` are
/// [K, N, F_out].
LossResult composite_loss(const SeqTensord& pred, const SeqTensord& target);

/// Batched form over K matrices of [N * F_out, B]. When `grads` is non-null
/// it receives dL/dpred for every step.
LossResult composite_loss(const std::vector<MatrixXd>& pred, const std::vector<MatrixXd>& target,
                          Index channels_per_node, std::vector<MatrixXd>* grads = nullptr);

// ---- optimizer -------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers, one per parameter tensor. `step` counts completed
/// updates; adam_step increments it before applying bias correction, so the
/// first update uses t = 1.
struct AdamState {
  std::int64_t step = 0;
  std::vector<VectorXd> m;
  std::vector<VectorXd> v;
};

/// Throws DivergenceError naming the first tensor whose gradient is not finite.
void adam_step(std::vector<Eigen::Map<VectorXd>>& params, const std::vector<Eigen::Map<VectorXd>>& grads,
               AdamState& state, const AdamConfig& cfg, const std::vector<std::string>& names = {});
void adam_step(Seq2SeqParams& params, Seq2SeqParams& grads, AdamState& state, const AdamConfig& cfg);

/// Scales all gradients by clip_norm / ||g|| when the global L2 norm exceeds
/// clip_norm. Returns the norm before clipping.
double clip_gradients(std::vector<Eigen::Map<VectorXd>>& grads, double clip_norm);
double clip_gradients(Seq2SeqParams& grads, double clip_norm);

// ---- configuration and state --------------------------------------------------------

struct TrainConfig {
  ScheduleConfig schedule;
  Index hidden_size = 32;
  double learning_rate = 1e-2;
  Index batch_size = 32;
  std::int64_t total_iters = 2000;
  double clip_norm = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool warm_start_m2 = true;
  std::uint64_t seed = 1;
  std::int64_t val_every = 50;
  double init_scale = 0.1;
  /// Worker threads for evaluation; results do not depend on it.
  unsigned threads = 1;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_epsilon}; }
  void validate() const;
};

enum class Stage { Single, M1, Transition, M2Solo };
std::string_view to_string(Stage s);

struct TrainState {
  std::int64_t iter = 0;  // global batch counter i
  AdamState adam;
  Stage stage = Stage::Single;
  Rng rng;
};

struct MetricsRow {
  std::int64_t iter = 0;
  std::string split;  // train | val | test
  std::string metric;
  double value = 0.0;
};

void write_curves_csv(const std::vector<MetricsRow>& rows, const std::string& path);

/// Training and evaluation inputs, already normalized.
struct TrainData {
  std::vector<Sample> train, val, test;
  DataMeta meta;

  ModelLayout layout() const;
  Index input_steps() const { return train.front().context.time_steps(); }
  Index horizon() const { return train.front().target.time_steps(); }
};

/// Called whenever a new best-validation model appears, with the stage
/// label ("model", "m1" or "m2").
using CheckpointHook = std::function<void(const std::string& stage, const Seq2SeqParams&)>;

struct TrainResult {
  Seq2SeqParams final_params;
  Seq2SeqParams best_params;
  std::int64_t best_iter = 0;
  double best_val_loss = 0.0;
  std::vector<MetricsRow> curves;
};

struct TpgResult {
  TrainResult m1;
  TrainResult m2;
  std::vector<MetricsRow> curves;  // both stages, m1 rows prefixed "m1_"
};

/// Teacher forcing or Scheduled Sampling. Starts from `initial` when given,
/// otherwise from a seeded initialization.
TrainResult train_scheduled(const TrainData& data, const TrainConfig& cfg,
                            std::optional<Seq2SeqParams> initial = std::nullopt, const CheckpointHook& hook = {});

/// Two-stage TPG curriculum.
TpgResult train_tpg(const TrainData& data, const TrainConfig& cfg, const CheckpointHook& hook = {});

// ---- half-timescale helpers ----------------------------------------------------------

/// The odd- or even-parity sub-sample of a window. Targets keep the given
/// parity of the horizon; the context keeps every second step counted back
/// from the target's first step, so spacing stays uniform across the boundary.
Sample half_timescale_sample(const Sample& s, Parity parity);

/// Full-horizon closed-loop forecast of a half-timescale model: run it on
/// both parities and interleave. Returns K matrices of [F_out, B].
std::vector<MatrixXd> predict_half_timescale(const Seq2SeqParams& m1, const std::vector<const Sample*>& batch);

// ---- evaluation ----------------------------------------------------------------------

struct EvalReport {
  double loss = 0.0;  // composite loss in normalized units
  MetricReport errors;  // data units
  std::vector<double> rmse_by_step;  // K entries
  std::vector<double> mae_by_step;
  // Frame data only.
  std::vector<double> ssim_by_step;
  std::vector<double> mse_by_step;
  double ssim = 0.0;
  double mse = 0.0;
  double ssim_zero = 0.0;  // SSIM of an all-zero prediction
  Index samples = 0;
};

enum class Forecaster { Full, HalfTimescale };

/// Closed-loop evaluation over every sample of a split.
EvalReport evaluate(const Seq2SeqParams& p, const std::vector<Sample>& split, const DataMeta& meta,
                    unsigned threads = 1, Forecaster forecaster = Forecaster::Full);

/// Cheap validation loss (composite, normalized) for training curves.
double validation_loss(const Seq2SeqParams& p, const std::vector<Sample>& split, unsigned threads = 1,
                       Forecaster forecaster = Forecaster::Full);

/// Rows of an evaluation: aggregate metrics (step 0) and horizon-resolved
/// ones, written as `metric,channel,step,value`.
struct EvalRow {
  std::string metric;
  std::string channel;
  Index step = 0;
  double value = 0.0;
};
std::vector<EvalRow> eval_rows(const EvalReport& report, const DataMeta& meta);
void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path);
std::vector<EvalRow> read_eval_csv(const std::string& path);

/// Worker cap from TPGF_THREADS (default 1).
unsigned threads_from_env();

}  // namespace tpgf
