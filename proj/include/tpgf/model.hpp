#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tpgf/nn.hpp"
#include "tpgf/rng.hpp"
#include "tpgf/tensor.hpp"

namespace tpgf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// How a flattened [N, F] input frame relates to the flattened [N, F_out]
/// prediction: output row n * F_out + j is channel target_channels[j] of
/// node n.
struct ModelLayout {
  Index nodes = 1;
  Index channels = 1;
  std::vector<Index> target_channels{0};

  Index input_size() const { return nodes * channels; }
  Index output_size() const { return nodes * static_cast<Index>(target_channels.size()); }
  /// Row of the input frame overwritten by output row `out_row`.
  Index input_row(Index out_row) const;
  void validate() const;

  friend bool operator==(const ModelLayout&, const ModelLayout&) = default;
};

/// Decoder feedback: a copy of `base` (the last observed context frame) with
/// the predicted channels overwritten by `values`. Works column-batched.
MatrixXd embed_feedback(const ModelLayout& layout, const MatrixXd& base, const MatrixXd& values);

struct Seq2SeqParams {
  ModelLayout layout;
  nn::LstmParams<double> encoder;
  nn::LstmParams<double> decoder;
  nn::LinearParams<double> projection;

  Index hidden_size() const { return encoder.hidden_size(); }
  Index input_size() const { return layout.input_size(); }
  Index output_size() const { return layout.output_size(); }

  /// Weights ~ init_scale * N(0, 1); biases zero.
  static Seq2SeqParams init(const ModelLayout& layout, Index hidden_size, Rng& rng, double init_scale = 0.1);
  static Seq2SeqParams zeros(const ModelLayout& layout, Index hidden_size);
  Seq2SeqParams zeros_like() const { return zeros(layout, hidden_size()); }

  /// Visits every parameter tensor in checkpoint order with a dotted name.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    encoder.for_each_tensor([&](const char* n, auto& t) { fn(std::string("encoder.") + n, t); });
    decoder.for_each_tensor([&](const char* n, auto& t) { fn(std::string("decoder.") + n, t); });
    projection.for_each_tensor([&](const char* n, auto& t) { fn(std::string("projection.") + n, t); });
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<Seq2SeqParams*>(this)->for_each_tensor(
        [&](const std::string& n, const auto& t) { fn(n, t); });
  }

  /// Flat views over each tensor's storage, checkpoint order.
  std::vector<Eigen::Map<VectorXd>> flat_views();
  Index parameter_count() const;

  void validate() const;
};

bool bitwise_equal(const Seq2SeqParams& a, const Seq2SeqParams& b);

struct ForecastRequest {
  SeqTensord context;  // [T_in, N, F]
  Index horizon = 1;
};

// ---- single-sample API -----------------------------------------------------

/// Final encoder state after consuming every context step from the zero state.
nn::LstmState<double> encode(const SeqTensord& context, const Seq2SeqParams& p);

struct DecodeStep {
  VectorXd prediction;  // [F_out]
  nn::LstmState<double> state;
  nn::LstmCache<double> cache;
};

DecodeStep decode_step(const VectorXd& prev_input, const nn::LstmState<double>& state, const Seq2SeqParams& p);

/// selector(s, own_prediction) returns the decoder input for step s + 1
/// given the [N, F_out] prediction of step s (both 1-based). It is called
/// K - 1 times.
using InputSelector = std::function<SeqTensord(Index step, const SeqTensord& own_prediction)>;

/// K sequential decode steps; the first decoder input is the last context frame.
SeqTensord rollout(const ForecastRequest& req, const Seq2SeqParams& p, const InputSelector& selector);

/// Closed-loop selector: feeds the model's own prediction back.
InputSelector closed_loop_selector(const ModelLayout& layout, const SeqTensord& context);

// ---- batched API (columns are samples) ---------------------------------------

/// Decoder feedback chosen after step s: values[F_out, B] plus, per column,
/// whether that value is the model's own prediction (gradient flows) or an
/// external constant (ground truth, frozen intermediate model).
struct FeedbackChoice {
  MatrixXd values;
  std::vector<char> own;
};

/// policy(s, own_prediction) with s the 1-based step just produced.
using FeedbackPolicy = std::function<FeedbackChoice(Index step, const MatrixXd& own_prediction)>;

FeedbackChoice own_feedback(const MatrixXd& own_prediction);

/// Caches of one batched rollout, enough for bptt.
struct RolloutTape {
  std::vector<nn::LstmCache<double>> encoder;
  std::vector<nn::LstmCache<double>> decoder;
  std::vector<MatrixXd> decoder_hidden;     // projection inputs, one per step
  std::vector<std::vector<char>> feedback_own;  // K - 1 entries
  std::vector<MatrixXd> predictions;        // K x [F_out, B]
};

/// Batched rollout over `context` (T_in matrices of [F_in, B]).
RolloutTape forward(const Seq2SeqParams& p, const std::vector<MatrixXd>& context, Index horizon,
                    const FeedbackPolicy& policy);

/// Closed-loop batched forecast without recording caches.
std::vector<MatrixXd> predict(const Seq2SeqParams& p, const std::vector<MatrixXd>& context, Index horizon);

/// Reverse-time gradient of a loss whose gradient w.r.t. predictions[s] is
/// loss_grads[s]. Feedback values taken from ground truth or a frozen model
/// are constants; own-prediction feedback propagates gradient.
Seq2SeqParams bptt(const Seq2SeqParams& p, const RolloutTape& tape, const std::vector<MatrixXd>& loss_grads);

// ---- checkpoints ---------------------------------------------------------

/// Layout: "TPGFCKPT", u32 version (1), u64 C, u64 F_in, u64 F_out, u64 nodes,
/// u64 channels, u64 target count, u64 target channel ids..., then every
/// parameter tensor in for_each_tensor order, row-major, little-endian float64.
void save_checkpoint(const std::string& path, const Seq2SeqParams& p);
Seq2SeqParams load_checkpoint(const std::string& path);

}  // namespace tpgf
