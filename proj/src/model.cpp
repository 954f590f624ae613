#include "tpgf/model.hpp"

#include <cstring>
#include <fstream>

#include "binary_io.hpp"

namespace tpgf {

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'P', 'G', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<MatrixXd> context_columns(const SeqTensord& context, Index input_size) {
  if (context.time_steps() < 1) throw DimensionError("encode: context must have at least one time step");
  if (context.frame_size() != input_size) {
    throw DimensionError("encode: context frame has " + std::to_string(context.frame_size()) +
                         " values, model expects " + std::to_string(input_size) + " (shape " +
                         shape_string(context.shape()) + ")");
  }
  std::vector<MatrixXd> steps;
  steps.reserve(static_cast<std::size_t>(context.time_steps()));
  for (Index t = 0; t < context.time_steps(); ++t) steps.emplace_back(context.frame(t));
  return steps;
}

template <typename M>
void write_row_major(std::ostream& os, const M& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) io::write_f64(os, m(r, c));
}

template <typename M>
void read_row_major(std::istream& is, M& m, const std::string& what) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = io::read_f64(is, what);
}

}  // namespace

Index ModelLayout::input_row(Index out_row) const {
  const auto per_node = static_cast<Index>(target_channels.size());
  return (out_row / per_node) * channels + target_channels[static_cast<std::size_t>(out_row % per_node)];
}

void ModelLayout::validate() const {
  if (nodes < 1 || channels < 1) throw ConfigError("model layout: nodes and channels must be >= 1");
  if (target_channels.empty()) throw ConfigError("model layout: at least one target channel required");
  for (std::size_t k = 0; k < target_channels.size(); ++k) {
    const Index c = target_channels[k];
    if (c < 0 || c >= channels) {
      throw ConfigError("model layout: target channel " + std::to_string(c) + " outside [0, " +
                        std::to_string(channels) + ")");
    }
    for (std::size_t m = 0; m < k; ++m)
      if (target_channels[m] == c) throw ConfigError("model layout: duplicate target channel " + std::to_string(c));
  }
}

MatrixXd embed_feedback(const ModelLayout& layout, const MatrixXd& base, const MatrixXd& values) {
  if (base.rows() != layout.input_size() || values.rows() != layout.output_size() || base.cols() != values.cols()) {
    throw DimensionError("embed_feedback: base " + std::to_string(base.rows()) + "x" + std::to_string(base.cols()) +
                         " and values " + std::to_string(values.rows()) + "x" + std::to_string(values.cols()) +
                         " do not fit layout (F_in=" + std::to_string(layout.input_size()) +
                         ", F_out=" + std::to_string(layout.output_size()) + ")");
  }
  MatrixXd out = base;
  for (Index r = 0; r < values.rows(); ++r) out.row(layout.input_row(r)) = values.row(r);
  return out;
}

Seq2SeqParams Seq2SeqParams::zeros(const ModelLayout& layout, Index hidden_size) {
  layout.validate();
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  return {layout, nn::LstmParams<double>::zeros(layout.input_size(), hidden_size),
          nn::LstmParams<double>::zeros(layout.input_size(), hidden_size),
          nn::LinearParams<double>::zeros(hidden_size, layout.output_size())};
}

Seq2SeqParams Seq2SeqParams::init(const ModelLayout& layout, Index hidden_size, Rng& rng, double init_scale) {
  layout.validate();
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  Seq2SeqParams p;
  p.layout = layout;
  p.encoder = nn::LstmParams<double>::random(layout.input_size(), hidden_size, init_scale, rng);
  p.decoder = nn::LstmParams<double>::random(layout.input_size(), hidden_size, init_scale, rng);
  p.projection = nn::LinearParams<double>::random(hidden_size, layout.output_size(), init_scale, rng);
  return p;
}

std::vector<Eigen::Map<VectorXd>> Seq2SeqParams::flat_views() {
  std::vector<Eigen::Map<VectorXd>> views;
  for_each_tensor([&](const std::string&, auto& t) { views.emplace_back(t.data(), t.size()); });
  return views;
}

Index Seq2SeqParams::parameter_count() const {
  Index n = 0;
  for_each_tensor([&](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

void Seq2SeqParams::validate() const {
  layout.validate();
  encoder.check();
  decoder.check();
  const Index c = hidden_size();
  if (encoder.input_size() != input_size() || decoder.input_size() != input_size() ||
      decoder.hidden_size() != c || projection.input_size() != c || projection.output_size() != output_size() ||
      projection.bias.size() != output_size()) {
    throw DimensionError("Seq2SeqParams: tensor extents disagree with layout and hidden size");
  }
}

bool bitwise_equal(const Seq2SeqParams& a, const Seq2SeqParams& b) {
  if (!(a.layout == b.layout) || a.parameter_count() != b.parameter_count()) return false;
  std::vector<const double*> pa, pb;
  std::vector<Index> sizes;
  a.for_each_tensor([&](const std::string&, const auto& t) {
    pa.push_back(t.data());
    sizes.push_back(t.size());
  });
  b.for_each_tensor([&](const std::string&, const auto& t) { pb.push_back(t.data()); });
  for (std::size_t k = 0; k < pa.size(); ++k) {
    if (std::memcmp(pa[k], pb[k], static_cast<std::size_t>(sizes[k]) * sizeof(double)) != 0) return false;
  }
  return true;
}

// ---- single-sample API -----------------------------------------------------

nn::LstmState<double> encode(const SeqTensord& context, const Seq2SeqParams& p) {
  const auto steps = context_columns(context, p.input_size());
  auto state = nn::LstmState<double>::zeros(p.hidden_size(), 1);
  for (const auto& x : steps) state = nn::lstm_step(x, state, p.encoder).state;
  return state;
}

DecodeStep decode_step(const VectorXd& prev_input, const nn::LstmState<double>& state, const Seq2SeqParams& p) {
  if (prev_input.size() != p.input_size()) {
    throw DimensionError("decode_step: input has " + std::to_string(prev_input.size()) + " values, model expects " +
                         std::to_string(p.input_size()));
  }
  auto step = nn::lstm_step(MatrixXd(prev_input), state, p.decoder);
  DecodeStep out;
  out.prediction = nn::linear_forward(step.state.h, p.projection).col(0);
  out.state = std::move(step.state);
  out.cache = std::move(step.cache);
  return out;
}

SeqTensord rollout(const ForecastRequest& req, const Seq2SeqParams& p, const InputSelector& selector) {
  if (req.horizon < 1) throw ConfigError("rollout: horizon must be >= 1");
  const auto per_node = static_cast<Index>(p.layout.target_channels.size());
  auto state = encode(req.context, p);
  VectorXd input = req.context.frame(req.context.time_steps() - 1);
  SeqTensord predictions({req.horizon, p.layout.nodes, per_node});
  for (Index s = 1; s <= req.horizon; ++s) {
    auto step = decode_step(input, state, p);
    state = std::move(step.state);
    predictions.frame(s - 1) = step.prediction;
    if (s == req.horizon) break;
    SeqTensord own({p.layout.nodes, per_node}, step.prediction);
    SeqTensord next = selector(s, own);
    if (next.size() != p.input_size()) {
      throw DimensionError("rollout: selector returned " + std::to_string(next.size()) + " values at step " +
                           std::to_string(s) + ", model expects " + std::to_string(p.input_size()));
    }
    input = next.data();
  }
  return predictions;
}

InputSelector closed_loop_selector(const ModelLayout& layout, const SeqTensord& context) {
  MatrixXd base = context.frame(context.time_steps() - 1);
  return [layout, base](Index, const SeqTensord& own) {
    MatrixXd fed = embed_feedback(layout, base, MatrixXd(own.data()));
    return SeqTensord({layout.nodes, layout.channels}, VectorXd(fed.col(0)));
  };
}

// ---- batched API -------------------------------------------------------------

FeedbackChoice own_feedback(const MatrixXd& own_prediction) {
  return {own_prediction, std::vector<char>(static_cast<std::size_t>(own_prediction.cols()), 1)};
}

namespace {

void check_batch_context(const Seq2SeqParams& p, const std::vector<MatrixXd>& context, Index horizon) {
  if (context.empty()) throw DimensionError("forward: context must have at least one time step");
  if (horizon < 1) throw ConfigError("forward: horizon must be >= 1");
  const Index batch = context.front().cols();
  for (const auto& x : context) {
    if (x.rows() != p.input_size() || x.cols() != batch) {
      throw DimensionError("forward: context step is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                           ", expected " + std::to_string(p.input_size()) + "x" + std::to_string(batch));
    }
  }
}

}  // namespace

RolloutTape forward(const Seq2SeqParams& p, const std::vector<MatrixXd>& context, Index horizon,
                    const FeedbackPolicy& policy) {
  check_batch_context(p, context, horizon);
  const Index batch = context.front().cols();
  RolloutTape tape;
  tape.encoder.reserve(context.size());
  auto state = nn::LstmState<double>::zeros(p.hidden_size(), batch);
  for (const auto& x : context) {
    auto step = nn::lstm_step(x, state, p.encoder);
    state = std::move(step.state);
    tape.encoder.push_back(std::move(step.cache));
  }

  const MatrixXd& base = context.back();
  MatrixXd input = base;
  for (Index s = 1; s <= horizon; ++s) {
    auto step = nn::lstm_step(input, state, p.decoder);
    state = std::move(step.state);
    tape.decoder.push_back(std::move(step.cache));
    tape.decoder_hidden.push_back(state.h);
    tape.predictions.push_back(nn::linear_forward(state.h, p.projection));
    if (s == horizon) break;
    FeedbackChoice choice = policy(s, tape.predictions.back());
    if (choice.values.rows() != p.output_size() || choice.values.cols() != batch ||
        choice.own.size() != static_cast<std::size_t>(batch)) {
      throw DimensionError("forward: feedback policy returned " + std::to_string(choice.values.rows()) + "x" +
                           std::to_string(choice.values.cols()) + " at step " + std::to_string(s) + ", expected " +
                           std::to_string(p.output_size()) + "x" + std::to_string(batch));
    }
    input = embed_feedback(p.layout, base, choice.values);
    tape.feedback_own.push_back(std::move(choice.own));
  }
  return tape;
}

std::vector<MatrixXd> predict(const Seq2SeqParams& p, const std::vector<MatrixXd>& context, Index horizon) {
  check_batch_context(p, context, horizon);
  const Index batch = context.front().cols();
  auto state = nn::LstmState<double>::zeros(p.hidden_size(), batch);
  for (const auto& x : context) state = nn::lstm_step(x, state, p.encoder).state;
  std::vector<MatrixXd> predictions;
  predictions.reserve(static_cast<std::size_t>(horizon));
  const MatrixXd& base = context.back();
  MatrixXd input = base;
  for (Index s = 1; s <= horizon; ++s) {
    state = nn::lstm_step(input, state, p.decoder).state;
    predictions.push_back(nn::linear_forward(state.h, p.projection));
    if (s < horizon) input = embed_feedback(p.layout, base, predictions.back());
  }
  return predictions;
}

Seq2SeqParams bptt(const Seq2SeqParams& p, const RolloutTape& tape, const std::vector<MatrixXd>& loss_grads) {
  const auto horizon = static_cast<Index>(tape.decoder.size());
  if (horizon < 1 || tape.encoder.empty() || static_cast<Index>(tape.predictions.size()) != horizon ||
      static_cast<Index>(tape.decoder_hidden.size()) != horizon ||
      static_cast<Index>(tape.feedback_own.size()) != horizon - 1) {
    throw std::logic_error("bptt: incomplete rollout tape");
  }
  if (static_cast<Index>(loss_grads.size()) != horizon) {
    throw DimensionError("bptt: expected " + std::to_string(horizon) + " loss gradients, got " +
                         std::to_string(loss_grads.size()));
  }
  const Index batch = tape.predictions.front().cols();
  const Index c = p.hidden_size();

  Seq2SeqParams grads = p.zeros_like();
  MatrixXd dh = MatrixXd::Zero(c, batch);
  MatrixXd dc = MatrixXd::Zero(c, batch);
  MatrixXd feedback_grad;  // gradient reaching prediction s through the input of step s + 1

  for (Index s = horizon; s >= 1; --s) {
    const auto k = static_cast<std::size_t>(s - 1);
    if (loss_grads[k].rows() != p.output_size() || loss_grads[k].cols() != batch) {
      throw DimensionError("bptt: loss gradient at step " + std::to_string(s) + " has the wrong shape");
    }
    MatrixXd dpred = loss_grads[k];
    if (s < horizon) dpred += feedback_grad;
    dh += nn::linear_backward(dpred, tape.decoder_hidden[k], p.projection, grads.projection);
    auto back = nn::lstm_step_backward(dh, dc, tape.decoder[k], p.decoder, grads.decoder);
    dh = std::move(back.grad_prev.h);
    dc = std::move(back.grad_prev.c);
    if (s >= 2) {
      const auto& own = tape.feedback_own[k - 1];
      feedback_grad.setZero(p.output_size(), batch);
      for (Index b = 0; b < batch; ++b) {
        if (!own[static_cast<std::size_t>(b)]) continue;
        for (Index r = 0; r < p.output_size(); ++r) feedback_grad(r, b) = back.grad_x(p.layout.input_row(r), b);
      }
    }
  }

  for (auto it = tape.encoder.rbegin(); it != tape.encoder.rend(); ++it) {
    auto back = nn::lstm_step_backward(dh, dc, *it, p.encoder, grads.encoder);
    dh = std::move(back.grad_prev.h);
    dc = std::move(back.grad_prev.c);
  }
  return grads;
}

// ---- checkpoints ---------------------------------------------------------

void save_checkpoint(const std::string& path, const Seq2SeqParams& p) {
  p.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  io::write_u32(os, kCheckpointVersion);
  io::write_u64(os, static_cast<std::uint64_t>(p.hidden_size()));
  io::write_u64(os, static_cast<std::uint64_t>(p.input_size()));
  io::write_u64(os, static_cast<std::uint64_t>(p.output_size()));
  io::write_u64(os, static_cast<std::uint64_t>(p.layout.nodes));
  io::write_u64(os, static_cast<std::uint64_t>(p.layout.channels));
  io::write_u64(os, p.layout.target_channels.size());
  for (Index ch : p.layout.target_channels) io::write_u64(os, static_cast<std::uint64_t>(ch));
  p.for_each_tensor([&](const std::string&, const auto& t) { write_row_major(os, t); });
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

Seq2SeqParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  const std::string what = "checkpoint " + path;
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError(what + ": bad magic");
  }
  const std::uint32_t version = io::read_u32(is, what);
  if (version != kCheckpointVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const auto hidden = static_cast<Index>(io::read_u64(is, what));
  const auto f_in = static_cast<Index>(io::read_u64(is, what));
  const auto f_out = static_cast<Index>(io::read_u64(is, what));
  ModelLayout layout;
  layout.nodes = static_cast<Index>(io::read_u64(is, what));
  layout.channels = static_cast<Index>(io::read_u64(is, what));
  const std::uint64_t n_targets = io::read_u64(is, what);
  if (n_targets == 0 || n_targets > 1'000'000) throw FormatError(what + ": implausible target count");
  layout.target_channels.clear();
  for (std::uint64_t k = 0; k < n_targets; ++k) layout.target_channels.push_back(static_cast<Index>(io::read_u64(is, what)));
  try {
    layout.validate();
  } catch (const ConfigError& e) {
    throw FormatError(what + ": " + e.what());
  }
  if (layout.input_size() != f_in || layout.output_size() != f_out || hidden < 1 || hidden > 1'000'000) {
    throw FormatError(what + ": header dimensions are inconsistent");
  }
  Seq2SeqParams p = Seq2SeqParams::zeros(layout, hidden);
  p.for_each_tensor([&](const std::string&, auto& t) { read_row_major(is, t, what); });
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes");
  return p;
}

}  // namespace tpgf
