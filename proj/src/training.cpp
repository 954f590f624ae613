#include "tpgf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace tpgf {

// ---- loss ----------------------------------------------------------------------

LossResult composite_loss(const SeqTensord& pred, const SeqTensord& target) {
  if (pred.shape() != target.shape() || pred.rank() != 3) {
    throw DimensionError("composite_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
  }
  const Index channels = pred.extent(2);
  const auto per_channel_count = static_cast<double>(pred.extent(0) * pred.extent(1));
  LossResult out;
  out.per_channel.assign(static_cast<std::size_t>(channels), 0.0);
  for (Index k = 0; k < pred.size(); ++k) {
    const double r = pred.data()(k) - target.data()(k);
    out.per_channel[static_cast<std::size_t>(k % channels)] += r * r;
  }
  for (double& v : out.per_channel) {
    v /= per_channel_count;
    out.total += v;
  }
  return out;
}

LossResult composite_loss(const std::vector<MatrixXd>& pred, const std::vector<MatrixXd>& target,
                          Index channels_per_node, std::vector<MatrixXd>* grads) {
  if (pred.size() != target.size() || pred.empty()) throw DimensionError("composite_loss: step counts differ");
  const Index rows = pred.front().rows();
  const Index batch = pred.front().cols();
  if (channels_per_node < 1 || rows % channels_per_node != 0) {
    throw DimensionError("composite_loss: rows not divisible by channel count");
  }
  const Index nodes = rows / channels_per_node;
  const double count = static_cast<double>(pred.size()) * static_cast<double>(nodes * batch);

  LossResult out;
  out.per_channel.assign(static_cast<std::size_t>(channels_per_node), 0.0);
  if (grads) grads->resize(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k].rows() != rows || pred[k].cols() != batch || target[k].rows() != rows || target[k].cols() != batch) {
      throw DimensionError("composite_loss: step " + std::to_string(k + 1) + " shape mismatch");
    }
    const MatrixXd residual = pred[k] - target[k];
    const Eigen::VectorXd row_sq = residual.array().square().rowwise().sum();
    for (Index r = 0; r < rows; ++r) out.per_channel[static_cast<std::size_t>(r % channels_per_node)] += row_sq(r);
    if (grads) (*grads)[k] = residual * (2.0 / count);
  }
  for (double& v : out.per_channel) {
    v /= count;
    out.total += v;
  }
  return out;
}

// ---- optimizer -------------------------------------------------------------------

void adam_step(std::vector<Eigen::Map<VectorXd>>& params, const std::vector<Eigen::Map<VectorXd>>& grads,
               AdamState& state, const AdamConfig& cfg, const std::vector<std::string>& names) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(VectorXd::Zero(p.size()));
      state.v.push_back(VectorXd::Zero(p.size()));
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: moment buffers do not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].size() || state.m[k].size() != params[k].size()) {
      throw DimensionError("adam_step: tensor " + std::to_string(k) + " size mismatch");
    }
    if (!grads[k].allFinite()) {
      const std::string name = k < names.size() ? names[k] : "#" + std::to_string(k);
      throw DivergenceError("adam_step: non-finite gradient in tensor " + name + " at update " +
                            std::to_string(state.step + 1));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[k];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[k].cwiseAbs2();
    params[k].array() -=
        cfg.learning_rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + cfg.epsilon);
  }
}

namespace {
std::vector<std::string> tensor_names(const Seq2SeqParams& p) {
  std::vector<std::string> names;
  p.for_each_tensor([&](const std::string& n, const auto&) { names.push_back(n); });
  return names;
}
}  // namespace

void adam_step(Seq2SeqParams& params, Seq2SeqParams& grads, AdamState& state, const AdamConfig& cfg) {
  auto pv = params.flat_views();
  const auto gv = grads.flat_views();
  adam_step(pv, gv, state, cfg, tensor_names(params));
}

double clip_gradients(std::vector<Eigen::Map<VectorXd>>& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const double factor = clip_norm / norm;
    for (auto& g : grads) g *= factor;
  }
  return norm;
}

double clip_gradients(Seq2SeqParams& grads, double clip_norm) {
  auto views = grads.flat_views();
  return clip_gradients(views, clip_norm);
}

// ---- configuration -----------------------------------------------------------------

void TrainConfig::validate() const {
  schedule.validate();
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_iters < 0) throw ConfigError("total_iters must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  if (val_every < 1) throw ConfigError("val_every must be >= 1");
  if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
  if (schedule.strategy == Strategy::Tpg && total_iters <= schedule.stage1_iters) {
    throw ConfigError("strategy tpg requires total_iters > stage1_iters");
  }
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Single: return "single";
    case Stage::M1: return "m1";
    case Stage::Transition: return "transition";
    case Stage::M2Solo: return "m2_solo";
  }
  return "unknown";
}

void write_curves_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fputs("iter,split,metric,value\n", f);
  for (const auto& r : rows) {
    std::fprintf(f, "%lld,%s,%s,%.17g\n", static_cast<long long>(r.iter), r.split.c_str(), r.metric.c_str(), r.value);
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw IoError("failed writing " + path);
}

ModelLayout TrainData::layout() const {
  if (train.empty()) throw ConfigError("training split is empty");
  const auto& s = train.front();
  ModelLayout layout;
  layout.nodes = s.context.extent(1);
  layout.channels = s.context.extent(2);
  layout.target_channels = meta.target_channels;
  if (static_cast<Index>(layout.target_channels.size()) != s.target.extent(2)) {
    throw DimensionError("dataset meta lists " + std::to_string(layout.target_channels.size()) +
                         " target channels but samples carry " + std::to_string(s.target.extent(2)));
  }
  return layout;
}

unsigned threads_from_env() {
  const char* v = std::getenv("TPGF_THREADS");
  if (!v || !*v) return 1;
  const long n = std::strtol(v, nullptr, 10);
  return n < 1 ? 1u : static_cast<unsigned>(std::min<long>(n, 256));
}

// ---- batching --------------------------------------------------------------------

namespace {

struct Batch {
  std::vector<MatrixXd> context;  // T_in x [F_in, B]
  std::vector<MatrixXd> target;   // K x [F_out, B]
};

Batch make_batch(const std::vector<const Sample*>& samples) {
  Batch b;
  const auto n = static_cast<Index>(samples.size());
  const Index t_in = samples.front()->context.time_steps();
  const Index horizon = samples.front()->target.time_steps();
  const Index f_in = samples.front()->context.frame_size();
  const Index f_out = samples.front()->target.frame_size();
  b.context.assign(static_cast<std::size_t>(t_in), MatrixXd(f_in, n));
  b.target.assign(static_cast<std::size_t>(horizon), MatrixXd(f_out, n));
  for (Index j = 0; j < n; ++j) {
    const Sample& s = *samples[static_cast<std::size_t>(j)];
    if (s.context.time_steps() != t_in || s.target.time_steps() != horizon) {
      throw DimensionError("make_batch: samples have different lengths");
    }
    for (Index t = 0; t < t_in; ++t) b.context[static_cast<std::size_t>(t)].col(j) = s.context.frame(t);
    for (Index t = 0; t < horizon; ++t) b.target[static_cast<std::size_t>(t)].col(j) = s.target.frame(t);
  }
  return b;
}

std::vector<const Sample*> draw_batch(const std::vector<Sample>& pool, Index size, Rng& rng) {
  std::vector<const Sample*> out;
  out.reserve(static_cast<std::size_t>(size));
  for (Index k = 0; k < size; ++k) out.push_back(&pool[rng.uniform_int(pool.size())]);
  return out;
}

std::vector<const Sample*> same_index(const std::vector<Sample>& pool, const std::vector<const Sample*>& batch,
                                      const std::vector<Sample>& original) {
  std::vector<const Sample*> out;
  out.reserve(batch.size());
  for (const Sample* s : batch) out.push_back(&pool[static_cast<std::size_t>(s - original.data())]);
  return out;
}

/// Per column: take `preferred` with probability epsilon, else own prediction.
FeedbackPolicy mixing_policy(const std::function<double(Index step)>& epsilon_at, const std::vector<MatrixXd>& preferred,
                             Rng& rng, InputSource source) {
  return [&preferred, &rng, epsilon_at, source](Index step, const MatrixXd& own) {
    FeedbackChoice choice = own_feedback(own);
    const double eps = epsilon_at(step);
    const MatrixXd& pref = preferred[static_cast<std::size_t>(step - 1)];
    for (Index b = 0; b < own.cols(); ++b) {
      const SamplingDecision d = draw_tau(eps, rng, source);
      if (d.tau == 1) {
        choice.values.col(b) = pref.col(b);
        choice.own[static_cast<std::size_t>(b)] = 0;
      }
    }
    return choice;
  };
}

/// Loss of one batch; adds weight * gradient into `grads`.
double accumulate_gradient(const Seq2SeqParams& p, const Batch& batch, const FeedbackPolicy& policy,
                           Seq2SeqParams& grads, double weight) {
  const auto horizon = static_cast<Index>(batch.target.size());
  const RolloutTape tape = forward(p, batch.context, horizon, policy);
  std::vector<MatrixXd> loss_grads;
  const LossResult loss = composite_loss(tape.predictions, batch.target,
                                         static_cast<Index>(p.layout.target_channels.size()), &loss_grads);
  if (!std::isfinite(loss.total)) throw DivergenceError("training loss is not finite");
  Seq2SeqParams g = bptt(p, tape, loss_grads);
  auto dst = grads.flat_views();
  auto src = g.flat_views();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += weight * src[k];
  return loss.total;
}

void apply_update(Seq2SeqParams& p, Seq2SeqParams& grads, TrainState& state, const TrainConfig& cfg) {
  clip_gradients(grads, cfg.clip_norm);
  adam_step(p, grads, state.adam, cfg.adam());
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < count; k += workers) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Fixed chunking keeps evaluation results independent of the thread count.
constexpr std::size_t kEvalChunk = 64;

std::vector<MatrixXd> forecast(const Seq2SeqParams& p, const std::vector<const Sample*>& chunk, Forecaster forecaster) {
  if (forecaster == Forecaster::HalfTimescale) return predict_half_timescale(p, chunk);
  const Batch b = make_batch(chunk);
  return predict(p, b.context, static_cast<Index>(b.target.size()));
}

std::vector<std::vector<const Sample*>> chunks_of(const std::vector<Sample>& split) {
  std::vector<std::vector<const Sample*>> chunks;
  for (std::size_t k = 0; k < split.size(); k += kEvalChunk) {
    std::vector<const Sample*> c;
    for (std::size_t j = k; j < std::min(split.size(), k + kEvalChunk); ++j) c.push_back(&split[j]);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

}  // namespace

// ---- half-timescale helpers ----------------------------------------------------------

Sample half_timescale_sample(const Sample& s, Parity parity) {
  const Index t_in = s.context.time_steps();
  const Index horizon = s.target.time_steps();
  const Index first = parity == Parity::Odd ? 0 : 1;  // 0-based horizon step
  if (horizon <= first) throw ConfigError("half_timescale_sample: horizon too short for the even parity");
  // Context steps at (t_in + first) - 2, - 4, ... in chronological order.
  std::vector<Index> ctx;
  for (Index t = t_in + first - 2; t >= 0; t -= 2) ctx.push_back(t);
  if (ctx.empty()) throw ConfigError("half_timescale_sample: context needs at least 2 steps");
  std::reverse(ctx.begin(), ctx.end());
  std::vector<Index> tgt;
  for (Index t = first; t < horizon; t += 2) tgt.push_back(t);

  Sample out;
  out.start = s.start + ctx.front();
  out.context = slice_time(s.context, std::span<const Index>(ctx));
  out.target = slice_time(s.target, std::span<const Index>(tgt));
  return out;
}

std::vector<MatrixXd> predict_half_timescale(const Seq2SeqParams& m1, const std::vector<const Sample*>& batch) {
  std::vector<Sample> odd, even;
  odd.reserve(batch.size());
  even.reserve(batch.size());
  for (const Sample* s : batch) {
    odd.push_back(half_timescale_sample(*s, Parity::Odd));
    even.push_back(half_timescale_sample(*s, Parity::Even));
  }
  std::vector<const Sample*> po, pe;
  for (const auto& s : odd) po.push_back(&s);
  for (const auto& s : even) pe.push_back(&s);
  const Batch bo = make_batch(po);
  const Batch be = make_batch(pe);
  const auto fo = predict(m1, bo.context, static_cast<Index>(bo.target.size()));
  const auto fe = predict(m1, be.context, static_cast<Index>(be.target.size()));
  std::vector<MatrixXd> out;
  const std::size_t horizon = fo.size() + fe.size();
  out.reserve(horizon);
  for (std::size_t j = 1; j <= horizon; ++j) {
    const M1Source src = m1_source_index(static_cast<std::int64_t>(j));
    const auto& from = src.parity == Parity::Odd ? fo : fe;
    out.push_back(from[static_cast<std::size_t>(src.k_half - 1)]);
  }
  return out;
}

// ---- evaluation ----------------------------------------------------------------------

double validation_loss(const Seq2SeqParams& p, const std::vector<Sample>& split, unsigned threads,
                       Forecaster forecaster) {
  if (split.empty()) throw ConfigError("validation split is empty");
  const auto chunks = chunks_of(split);
  const auto per_node = static_cast<Index>(p.layout.target_channels.size());
  std::vector<Eigen::VectorXd> sums(chunks.size());
  parallel_for(chunks.size(), threads, [&](std::size_t c) {
    const auto pred = forecast(p, chunks[c], forecaster);
    const Batch b = make_batch(chunks[c]);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(per_node);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const Eigen::VectorXd row_sq = (pred[k] - b.target[k]).array().square().rowwise().sum();
      for (Index r = 0; r < row_sq.size(); ++r) s(r % per_node) += row_sq(r);
    }
    sums[c] = s;
  });
  Eigen::VectorXd total = Eigen::VectorXd::Zero(per_node);
  for (const auto& s : sums) total += s;
  const double count = static_cast<double>(split.size()) * static_cast<double>(split.front().target.time_steps()) *
                       static_cast<double>(p.layout.nodes);
  return total.sum() / count;
}

EvalReport evaluate(const Seq2SeqParams& p, const std::vector<Sample>& split, const DataMeta& meta, unsigned threads,
                    Forecaster forecaster) {
  if (split.empty()) throw ConfigError("evaluate: split is empty");
  const Sample& first = split.front();
  if (first.context.frame_size() != p.input_size() || first.target.frame_size() != p.output_size()) {
    throw DimensionError("evaluate: model expects F_in=" + std::to_string(p.input_size()) + ", F_out=" +
                         std::to_string(p.output_size()) + " but data has " + std::to_string(first.context.frame_size()) +
                         " and " + std::to_string(first.target.frame_size()));
  }
  const Index horizon = first.target.time_steps();
  const Index nodes = first.target.extent(1);
  const Index per_node = first.target.extent(2);
  const bool frames = meta.grid_height > 0 && meta.grid_width > 0 && per_node == 1 &&
                      meta.grid_height * meta.grid_width == nodes;

  struct Acc {
    Eigen::VectorXd loss_sq, sq, ab;   // per channel
    Eigen::VectorXd step_sq, step_ab;  // per step
    Eigen::VectorXd ssim_step, mse_step;
    double ssim_zero = 0.0;
  };
  const auto chunks = chunks_of(split);
  std::vector<Acc> accs(chunks.size());
  parallel_for(chunks.size(), threads, [&](std::size_t c) {
    Acc a;
    a.loss_sq = a.sq = a.ab = Eigen::VectorXd::Zero(per_node);
    a.step_sq = a.step_ab = a.ssim_step = a.mse_step = Eigen::VectorXd::Zero(horizon);
    const auto pred = forecast(p, chunks[c], forecaster);
    for (std::size_t j = 0; j < chunks[c].size(); ++j) {
      const Sample& s = *chunks[c][j];
      SeqTensord norm_pred({horizon, nodes, per_node});
      for (Index k = 0; k < horizon; ++k) norm_pred.frame(k) = pred[static_cast<std::size_t>(k)].col(static_cast<Index>(j));
      const SeqTensord dp = denormalize(norm_pred, meta);
      const SeqTensord dt = denormalize(s.target, meta);
      for (Index k = 0; k < norm_pred.size(); ++k) {
        const Index ch = k % per_node;
        const Index step = k / (nodes * per_node);
        const double rn = norm_pred.data()(k) - s.target.data()(k);
        const double r = dp.data()(k) - dt.data()(k);
        a.loss_sq(ch) += rn * rn;
        a.sq(ch) += r * r;
        a.ab(ch) += std::abs(r);
        a.step_sq(step) += r * r;
        a.step_ab(step) += std::abs(r);
      }
      if (frames) {
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(nodes);
        for (Index k = 0; k < horizon; ++k) {
          // Forecasts can leave [0, 1] slightly; SSIM assumes the dynamic range.
          const Eigen::VectorXd pk = dp.frame(k).cwiseMax(0.0).cwiseMin(1.0);
          const Eigen::VectorXd tk = dt.frame(k);
          a.ssim_step(k) += ssim_per_frame(pk, tk, meta.grid_height, meta.grid_width);
          a.mse_step(k) += (dp.frame(k) - tk).squaredNorm() / static_cast<double>(nodes);
          a.ssim_zero += ssim_per_frame(zero, tk, meta.grid_height, meta.grid_width);
        }
      }
    }
    accs[c] = std::move(a);
  });

  Acc total = std::move(accs.front());
  for (std::size_t c = 1; c < accs.size(); ++c) {
    total.loss_sq += accs[c].loss_sq;
    total.sq += accs[c].sq;
    total.ab += accs[c].ab;
    total.step_sq += accs[c].step_sq;
    total.step_ab += accs[c].step_ab;
    total.ssim_step += accs[c].ssim_step;
    total.mse_step += accs[c].mse_step;
    total.ssim_zero += accs[c].ssim_zero;
  }

  const auto n_samples = static_cast<double>(split.size());
  const double per_channel_n = n_samples * static_cast<double>(horizon * nodes);
  EvalReport r;
  r.samples = static_cast<Index>(split.size());
  r.loss = total.loss_sq.sum() / per_channel_n;
  r.errors.n = horizon * nodes;
  for (Index ch = 0; ch < per_node; ++ch) {
    r.errors.rmse.push_back(std::sqrt(total.sq(ch) / per_channel_n));
    r.errors.mae.push_back(total.ab(ch) / per_channel_n);
  }
  r.errors.rmse_all = std::sqrt(total.sq.sum() / (per_channel_n * static_cast<double>(per_node)));
  r.errors.mae_all = total.ab.sum() / (per_channel_n * static_cast<double>(per_node));
  const double per_step_n = n_samples * static_cast<double>(nodes * per_node);
  for (Index k = 0; k < horizon; ++k) {
    r.rmse_by_step.push_back(std::sqrt(total.step_sq(k) / per_step_n));
    r.mae_by_step.push_back(total.step_ab(k) / per_step_n);
  }
  if (frames) {
    for (Index k = 0; k < horizon; ++k) {
      r.ssim_by_step.push_back(total.ssim_step(k) / n_samples);
      r.mse_by_step.push_back(total.mse_step(k) / n_samples);
    }
    r.ssim = total.ssim_step.sum() / (n_samples * static_cast<double>(horizon));
    r.mse = total.mse_step.sum() / (n_samples * static_cast<double>(horizon));
    r.ssim_zero = total.ssim_zero / (n_samples * static_cast<double>(horizon));
  }
  return r;
}

std::vector<EvalRow> eval_rows(const EvalReport& report, const DataMeta& meta) {
  std::vector<EvalRow> rows;
  rows.push_back({"loss", "all", 0, report.loss});
  for (std::size_t ch = 0; ch < report.errors.rmse.size(); ++ch) {
    std::string name = "c" + std::to_string(ch);
    if (ch < meta.target_channels.size()) {
      const auto src = static_cast<std::size_t>(meta.target_channels[ch]);
      name = src < meta.channel_names.size() ? meta.channel_names[src] : "c" + std::to_string(src);
    }
    rows.push_back({"rmse", name, 0, report.errors.rmse[ch]});
    rows.push_back({"mae", name, 0, report.errors.mae[ch]});
  }
  rows.push_back({"rmse", "all", 0, report.errors.rmse_all});
  rows.push_back({"mae", "all", 0, report.errors.mae_all});
  for (std::size_t k = 0; k < report.rmse_by_step.size(); ++k) {
    rows.push_back({"rmse_step", "all", static_cast<Index>(k + 1), report.rmse_by_step[k]});
  }
  for (std::size_t k = 0; k < report.mae_by_step.size(); ++k) {
    rows.push_back({"mae_step", "all", static_cast<Index>(k + 1), report.mae_by_step[k]});
  }
  if (!report.ssim_by_step.empty()) {
    rows.push_back({"ssim", "all", 0, report.ssim});
    rows.push_back({"mse", "all", 0, report.mse});
    rows.push_back({"ssim_zero", "all", 0, report.ssim_zero});
    for (std::size_t k = 0; k < report.ssim_by_step.size(); ++k) {
      rows.push_back({"ssim_step", "all", static_cast<Index>(k + 1), report.ssim_by_step[k]});
    }
    for (std::size_t k = 0; k < report.mse_by_step.size(); ++k) {
      rows.push_back({"mse_step", "all", static_cast<Index>(k + 1), report.mse_by_step[k]});
    }
  }
  return rows;
}

void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fputs("metric,channel,step,value\n", f);
  for (const auto& r : rows) {
    std::fprintf(f, "%s,%s,%lld,%.17g\n", r.metric.c_str(), r.channel.c_str(), static_cast<long long>(r.step), r.value);
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw IoError("failed writing " + path);
}

std::vector<EvalRow> read_eval_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "metric,channel,step,value") {
    throw FormatError(path + ": expected header 'metric,channel,step,value'");
  }
  std::vector<EvalRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    EvalRow r;
    std::string step, value;
    if (!std::getline(ss, r.metric, ',') || !std::getline(ss, r.channel, ',') || !std::getline(ss, step, ',') ||
        !std::getline(ss, value)) {
      throw FormatError(path + ": malformed row '" + line + "'");
    }
    char* end = nullptr;
    r.step = std::strtoll(step.c_str(), &end, 10);
    r.value = std::strtod(value.c_str(), &end);
    if (*end != '\0') throw FormatError(path + ": malformed value in '" + line + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- drivers -----------------------------------------------------------------------

namespace {

void check_data(const TrainData& data) {
  if (data.train.empty()) throw ConfigError("training split is empty");
  if (data.val.empty()) throw ConfigError("validation split is empty");
  if (data.test.empty()) throw ConfigError("test split is empty");
}

bool is_cadence(std::int64_t completed, std::int64_t total, std::int64_t every) {
  return completed % every == 0 || completed == total;
}

}  // namespace

TrainResult train_scheduled(const TrainData& data, const TrainConfig& cfg, std::optional<Seq2SeqParams> initial,
                            const CheckpointHook& hook) {
  cfg.validate();
  if (cfg.schedule.strategy == Strategy::Tpg) throw ConfigError("train_scheduled: use train_tpg for strategy tpg");
  check_data(data);
  const ModelLayout layout = data.layout();

  TrainResult result;
  if (initial) {
    if (!(initial->layout == layout)) throw DimensionError("train_scheduled: initial parameters do not fit the data");
    result.final_params = std::move(*initial);
  } else {
    Rng init_rng = Rng(cfg.seed).split(1);
    result.final_params = Seq2SeqParams::init(layout, cfg.hidden_size, init_rng, cfg.init_scale);
  }
  Seq2SeqParams& params = result.final_params;
  result.best_params = params;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  TrainState state{0, {}, Stage::Single, Rng(cfg.seed).split(2)};
  for (; state.iter < cfg.total_iters; ++state.iter) {
    const std::int64_t i = state.iter;
    const auto picked = draw_batch(data.train, cfg.batch_size, state.rng);
    const Batch batch = make_batch(picked);
    const auto policy = mixing_policy([&](Index step) { return epsilon_for(cfg.schedule, i, step + 1); },
                                      batch.target, state.rng, InputSource::GroundTruth);
    Seq2SeqParams grads = params.zeros_like();
    const double loss = accumulate_gradient(params, batch, policy, grads, 1.0);
    apply_update(params, grads, state, cfg);

    const std::int64_t done = i + 1;
    result.curves.push_back({done, "train", "loss", loss});
    result.curves.push_back({done, "train", "epsilon", epsilon_for(cfg.schedule, i, 2)});
    if (is_cadence(done, cfg.total_iters, cfg.val_every)) {
      const double val = validation_loss(params, data.val, cfg.threads);
      const double test = validation_loss(params, data.test, cfg.threads);
      if (!std::isfinite(val)) throw DivergenceError("validation loss is not finite at iteration " + std::to_string(done));
      result.curves.push_back({done, "val", "loss", val});
      result.curves.push_back({done, "test", "loss", test});
      if (val < result.best_val_loss) {
        result.best_val_loss = val;
        result.best_iter = done;
        result.best_params = params;
        if (hook) hook("model", params);
      }
    }
  }
  if (cfg.total_iters == 0) result.best_val_loss = validation_loss(params, data.val, cfg.threads);
  result.curves.push_back({cfg.total_iters, "val", "best_loss", result.best_val_loss});
  result.curves.push_back({cfg.total_iters, "val", "best_iter", static_cast<double>(result.best_iter)});
  result.curves.push_back({cfg.total_iters, "test", "best_loss", validation_loss(result.best_params, data.test, cfg.threads)});
  return result;
}

TpgResult train_tpg(const TrainData& data, const TrainConfig& cfg, const CheckpointHook& hook) {
  cfg.validate();
  if (cfg.schedule.strategy != Strategy::Tpg) throw ConfigError("train_tpg: strategy must be tpg");
  check_data(data);
  if (data.horizon() < 2) throw ConfigError("strategy tpg requires horizon K >= 2");
  if (data.input_steps() < 2) throw ConfigError("strategy tpg requires at least 2 context steps");
  const ModelLayout layout = data.layout();

  std::vector<Sample> train_odd, train_even;
  train_odd.reserve(data.train.size());
  train_even.reserve(data.train.size());
  for (const auto& s : data.train) {
    train_odd.push_back(half_timescale_sample(s, Parity::Odd));
    train_even.push_back(half_timescale_sample(s, Parity::Even));
  }

  TpgResult out;
  TrainState state{0, {}, Stage::M1, Rng(cfg.seed).split(2)};

  // Stage 1: half-timescale model on both parities.
  {
    Rng init_rng = Rng(cfg.seed).split(1);
    TrainResult& m1 = out.m1;
    m1.final_params = Seq2SeqParams::init(layout, cfg.hidden_size, init_rng, cfg.init_scale);
    m1.best_params = m1.final_params;
    m1.best_val_loss = std::numeric_limits<double>::infinity();
    Seq2SeqParams& params = m1.final_params;
    const std::int64_t stage1 = cfg.schedule.stage1_iters;

    for (; state.iter < stage1; ++state.iter) {
      const std::int64_t i = state.iter;
      const double eps = m1_epsilon(cfg.schedule, i);
      const auto picked = draw_batch(data.train, cfg.batch_size, state.rng);
      Seq2SeqParams grads = params.zeros_like();
      double loss = 0.0;
      for (const auto* pool : {&train_odd, &train_even}) {
        const Batch batch = make_batch(same_index(*pool, picked, data.train));
        const auto policy = mixing_policy([eps](Index) { return eps; }, batch.target, state.rng, InputSource::GroundTruth);
        loss += 0.5 * accumulate_gradient(params, batch, policy, grads, 0.5);
      }
      apply_update(params, grads, state, cfg);

      const std::int64_t done = i + 1;
      m1.curves.push_back({done, "train", "m1_loss", loss});
      m1.curves.push_back({done, "train", "m1_epsilon", eps});
      if (is_cadence(done, stage1, cfg.val_every)) {
        const double val = validation_loss(params, data.val, cfg.threads, Forecaster::HalfTimescale);
        const double test = validation_loss(params, data.test, cfg.threads, Forecaster::HalfTimescale);
        if (!std::isfinite(val)) throw DivergenceError("m1 validation loss is not finite at iteration " + std::to_string(done));
        m1.curves.push_back({done, "val", "m1_loss", val});
        m1.curves.push_back({done, "test", "m1_loss", test});
        if (val < m1.best_val_loss) {
          m1.best_val_loss = val;
          m1.best_iter = done;
          m1.best_params = params;
          if (hook) hook("m1", params);
        }
      }
    }
  }

  // Stage 2: full-timescale model, sampling from the frozen half-timescale model.
  {
    const Seq2SeqParams& frozen = out.m1.best_params;
    TrainResult& m2 = out.m2;
    if (cfg.warm_start_m2) {
      m2.final_params = frozen;
    } else {
      Rng init_rng = Rng(cfg.seed).split(3);
      m2.final_params = Seq2SeqParams::init(layout, cfg.hidden_size, init_rng, cfg.init_scale);
    }
    m2.best_params = m2.final_params;
    m2.best_val_loss = std::numeric_limits<double>::infinity();
    Seq2SeqParams& params = m2.final_params;
    // A warm-started M2 continues M1's optimizer stream; a fresh one starts its own.
    if (!cfg.warm_start_m2) state.adam = AdamState{};
    state.stage = Stage::Transition;

    for (; state.iter < cfg.total_iters; ++state.iter) {
      const std::int64_t i = state.iter;
      const auto picked = draw_batch(data.train, cfg.batch_size, state.rng);
      const Batch batch = make_batch(picked);
      const std::vector<MatrixXd> m1_forecast = predict_half_timescale(frozen, picked);
      const auto policy = mixing_policy([&](Index step) { return epsilon_for(cfg.schedule, i, step + 1); },
                                        m1_forecast, state.rng, InputSource::IntermediateModel);
      Seq2SeqParams grads = params.zeros_like();
      const double loss = accumulate_gradient(params, batch, policy, grads, 1.0);
      apply_update(params, grads, state, cfg);

      const double eps = epsilon_for(cfg.schedule, i, 2);
      if (eps < 1e-3) state.stage = Stage::M2Solo;
      const std::int64_t done = i + 1;
      m2.curves.push_back({done, "train", "loss", loss});
      m2.curves.push_back({done, "train", "epsilon", eps});
      if (is_cadence(done, cfg.total_iters, cfg.val_every)) {
        const double val = validation_loss(params, data.val, cfg.threads);
        const double test = validation_loss(params, data.test, cfg.threads);
        if (!std::isfinite(val)) throw DivergenceError("m2 validation loss is not finite at iteration " + std::to_string(done));
        m2.curves.push_back({done, "val", "loss", val});
        m2.curves.push_back({done, "test", "loss", test});
        if (val < m2.best_val_loss) {
          m2.best_val_loss = val;
          m2.best_iter = done;
          m2.best_params = params;
          if (hook) hook("m2", params);
        }
      }
    }
  }

  out.curves = out.m1.curves;
  out.curves.insert(out.curves.end(), out.m2.curves.begin(), out.m2.curves.end());
  const std::int64_t total = cfg.total_iters;
  out.curves.push_back({total, "val", "m1_best_loss", out.m1.best_val_loss});
  out.curves.push_back({total, "val", "m1_best_iter", static_cast<double>(out.m1.best_iter)});
  out.curves.push_back({total, "val", "best_loss", out.m2.best_val_loss});
  out.curves.push_back({total, "val", "best_iter", static_cast<double>(out.m2.best_iter)});
  out.curves.push_back({total, "test", "best_loss", validation_loss(out.m2.best_params, data.test, cfg.threads)});
  return out;
}

}  // namespace tpgf
