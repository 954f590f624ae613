#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "tpgf/model.hpp"

using namespace tpgf;
using testing::Feed;

namespace {

ModelLayout small_layout() {
  ModelLayout l;
  l.nodes = 2;
  l.channels = 3;
  l.target_channels = {2, 0};
  return l;
}

SeqTensord random_context(Index t_in, const ModelLayout& l, Rng& rng) {
  return randn({t_in, l.nodes, l.channels}, 1.0, rng);
}

MatrixXd as_column(const SeqTensord& frame_source, Index t) { return frame_source.frame(t); }

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tpgf_test_model_" + name)).string();
}

}  // namespace

TEST_CASE("layout feedback rows") {
  const ModelLayout l = small_layout();
  CHECK(l.input_size() == 6);
  CHECK(l.output_size() == 4);
  CHECK(l.input_row(0) == 2);
  CHECK(l.input_row(1) == 0);
  CHECK(l.input_row(2) == 5);
  CHECK(l.input_row(3) == 3);
  MatrixXd base = MatrixXd::Constant(6, 1, 7.0);
  MatrixXd values(4, 1);
  values << 1, 2, 3, 4;
  const MatrixXd fed = embed_feedback(l, base, values);
  CHECK(fed(0) == 2);
  CHECK(fed(1) == 7);
  CHECK(fed(2) == 1);
  CHECK(fed(3) == 4);
  CHECK(fed(4) == 7);
  CHECK(fed(5) == 3);
  ModelLayout bad = l;
  bad.target_channels = {3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("encode of one step is one lstm step from zero") {
  Rng rng(1);
  const auto p = Seq2SeqParams::init(small_layout(), 4, rng, 0.5);
  const auto ctx = random_context(1, p.layout, rng);
  const auto s = encode(ctx, p);
  const auto manual = nn::lstm_step<double>(as_column(ctx, 0), nn::LstmState<double>::zeros(4, 1), p.encoder);
  CHECK(s.h == manual.state.h);
  CHECK(s.c == manual.state.c);
}

TEST_CASE("encode equals manual unrolling") {
  Rng rng(2);
  const auto p = Seq2SeqParams::init(small_layout(), 3, rng, 0.5);
  const auto ctx = random_context(3, p.layout, rng);
  auto st = nn::LstmState<double>::zeros(3, 1);
  for (Index t = 0; t < 3; ++t) st = nn::lstm_step<double>(as_column(ctx, t), st, p.encoder).state;
  const auto s = encode(ctx, p);
  CHECK((s.h - st.h).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((s.c - st.c).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(encode(randn({3, 2, 2}, 1.0, rng), p), DimensionError);
}

TEST_CASE("encode with zero parameters stays bounded") {
  const auto p = Seq2SeqParams::zeros(small_layout(), 3);
  Rng rng(3);
  const auto s = encode(random_context(5, p.layout, rng), p);
  CHECK(s.h.isZero(0));
  CHECK(s.c.isZero(0));
}

TEST_CASE("decode_step") {
  auto zero = Seq2SeqParams::zeros(small_layout(), 3);
  zero.projection.bias << 1, 2, 3, 4;
  const auto d = decode_step(VectorXd::Ones(6), nn::LstmState<double>::zeros(3, 1), zero);
  CHECK(d.prediction == zero.projection.bias);

  Rng rng(4);
  const auto p = Seq2SeqParams::init(small_layout(), 3, rng, 0.5);
  const VectorXd x = VectorXd::Random(6);
  const nn::LstmState<double> st{MatrixXd::Random(3, 1), MatrixXd::Random(3, 1)};
  const auto a = decode_step(x, st, p);
  const auto cell = nn::lstm_step<double>(x, st, p.decoder);
  CHECK(a.prediction == VectorXd(nn::linear_forward<double>(cell.state.h, p.projection)));
  const auto b = decode_step(x, st, p);
  CHECK(a.prediction == b.prediction);
  CHECK_THROWS_AS(decode_step(VectorXd::Ones(4), st, p), DimensionError);
}

TEST_CASE("rollout selector contract") {
  Rng rng(5);
  const auto p = Seq2SeqParams::init(small_layout(), 3, rng, 0.5);
  const auto ctx = random_context(4, p.layout, rng);

  int calls = 0;
  auto counting = [&](Index, const SeqTensord& own) {
    ++calls;
    return closed_loop_selector(p.layout, ctx)(0, own);
  };
  rollout({ctx, 1}, p, counting);
  CHECK(calls == 0);
  rollout({ctx, 6}, p, counting);
  CHECK(calls == 5);

  auto bad = [&](Index step, const SeqTensord& own) {
    if (step == 3) return SeqTensord({5});
    return closed_loop_selector(p.layout, ctx)(step, own);
  };
  try {
    rollout({ctx, 5}, p, bad);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}

TEST_CASE("closed-loop rollout equals manual iteration") {
  Rng rng(6);
  const auto p = Seq2SeqParams::init(small_layout(), 5, rng, 0.5);
  const auto ctx = random_context(4, p.layout, rng);
  const auto out = rollout({ctx, 4}, p, closed_loop_selector(p.layout, ctx));

  auto st = encode(ctx, p);
  const MatrixXd last = as_column(ctx, 3);
  MatrixXd input = last;
  for (Index k = 0; k < 4; ++k) {
    const auto d = decode_step(input, st, p);
    CHECK((d.prediction - VectorXd(out.frame(k))).cwiseAbs().maxCoeff() <= 1e-12);
    st = d.state;
    input = embed_feedback(p.layout, last, d.prediction);
  }
}

TEST_CASE("teacher-forced rollout equals step-wise decoding") {
  Rng rng(7);
  const auto p = Seq2SeqParams::init(small_layout(), 3, rng, 0.5);
  const auto ctx = random_context(3, p.layout, rng);
  const auto truth = randn({3, 2, 2}, 1.0, rng);
  const MatrixXd last = as_column(ctx, 2);
  auto teacher = [&](Index step, const SeqTensord&) {
    const VectorXd fed = embed_feedback(p.layout, last, truth.frame(step - 1));
    return SeqTensord({2, 3}, fed);
  };
  const auto out = rollout({ctx, 3}, p, teacher);
  auto st = encode(ctx, p);
  MatrixXd input = last;
  for (Index k = 0; k < 3; ++k) {
    const auto d = decode_step(input, st, p);
    CHECK(d.prediction == VectorXd(out.frame(k)));
    st = d.state;
    input = embed_feedback(p.layout, last, truth.frame(k));
  }
}

TEST_CASE("batched forward matches single-sample rollout") {
  Rng rng(8);
  const auto p = Seq2SeqParams::init(small_layout(), 4, rng, 0.5);
  std::vector<SeqTensord> ctxs = {random_context(3, p.layout, rng), random_context(3, p.layout, rng)};
  std::vector<MatrixXd> batch(3, MatrixXd(6, 2));
  for (Index t = 0; t < 3; ++t)
    for (Index b = 0; b < 2; ++b) batch[static_cast<std::size_t>(t)].col(b) = ctxs[static_cast<std::size_t>(b)].frame(t);
  const auto preds = predict(p, batch, 5);
  const auto tape = forward(p, batch, 5, [](Index, const MatrixXd& own) { return own_feedback(own); });
  for (Index b = 0; b < 2; ++b) {
    const auto& ctx = ctxs[static_cast<std::size_t>(b)];
    const auto single = rollout({ctx, 5}, p, closed_loop_selector(p.layout, ctx));
    for (Index k = 0; k < 5; ++k) {
      CHECK((preds[static_cast<std::size_t>(k)].col(b) - single.frame(k)).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(preds[static_cast<std::size_t>(k)].col(b) == tape.predictions[static_cast<std::size_t>(k)].col(b));
    }
  }
  CHECK(tape.feedback_own.size() == 4);
}

TEST_CASE("rollout gradients agree with finite differences") {
  SUBCASE("2-step teacher-forced, 3 units") {
    const auto fx = testing::make_fixture(3, 2, 3, 2, 21);
    for (const auto& c : testing::check_gradients(fx, Feed::Teacher)) {
      CAPTURE(c.name);
      CHECK(c.rel_error < 1e-5);
    }
  }
  SUBCASE("closed loop, 1 unit") {
    const auto fx = testing::make_fixture(1, 2, 3, 4, 22);
    for (const auto& c : testing::check_gradients(fx, Feed::Closed)) {
      CAPTURE(c.name);
      CHECK(c.rel_error < 1e-5);
    }
  }
  SUBCASE("sampled, 4 units") {
    const auto fx = testing::make_fixture(4, 3, 3, 4, 23);
    for (const auto& c : testing::check_gradients(fx, Feed::Sampled)) {
      CAPTURE(c.name);
      CHECK(c.rel_error < 1e-5);
    }
  }
}

TEST_CASE("gradient flows through own feedback and stops at constant inputs") {
  const auto fx = testing::make_fixture(1, 1, 2, 3, 31);
  const auto closed = testing::fixture_gradient(fx.params, fx, Feed::Closed);
  const auto teacher = testing::fixture_gradient(fx.params, fx, Feed::Teacher);
  // Same predictions at step 1, so any difference comes from the feedback path.
  CHECK((closed.decoder.input_weights - teacher.decoder.input_weights).norm() > 1e-8);

  // Under teacher forcing the step-3 loss cannot reach the projection through
  // earlier predictions, so the bias gradient is exactly the upstream one.
  const auto tape = forward(fx.params, fx.context, 3, testing::policy_for(fx, Feed::Teacher));
  std::vector<MatrixXd> only_last = {MatrixXd::Zero(4, 1), MatrixXd::Zero(4, 1), MatrixXd::Ones(4, 1)};
  const auto g = bptt(fx.params, tape, only_last);
  CHECK(g.projection.bias == VectorXd::Ones(4));
  const auto closed_tape = forward(fx.params, fx.context, 3, testing::policy_for(fx, Feed::Closed));
  const auto gc = bptt(fx.params, closed_tape, only_last);
  CHECK((gc.projection.bias - VectorXd::Ones(4)).norm() > 1e-10);

  std::vector<MatrixXd> zeros(3, MatrixXd::Zero(4, 1));
  const auto z = bptt(fx.params, tape, zeros);
  Seq2SeqParams zz = z;
  for (auto& v : zz.flat_views()) CHECK(v.isZero(0));
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(9);
  const auto p = Seq2SeqParams::init(small_layout(), 5, rng, 0.3);
  const std::string path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, p);
  const auto q = load_checkpoint(path);
  CHECK(bitwise_equal(p, q));
  CHECK(q.layout == p.layout);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XPGF", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  save_checkpoint(path, p);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
