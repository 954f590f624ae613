#include <doctest.h>

#include <cmath>

#include "tpgf/sampling.hpp"

using namespace tpgf;

TEST_CASE("inverse sigmoid closed forms") {
  CHECK(inverse_sigmoid_epsilon(0, 3000) == doctest::Approx(3000.0 / 3001.0).epsilon(1e-15));
  for (double lambda : {10.0, 500.0, 3000.0}) {
    CHECK(std::abs(inverse_sigmoid_epsilon(lambda * std::log(lambda), lambda) - 0.5) < 1e-12);
  }
  CHECK(inverse_sigmoid_epsilon(1e9, 200) == 0.0);
  CHECK(inverse_sigmoid_epsilon(1000, 200) == doctest::Approx(0.57403113164597153).epsilon(1e-14));
  CHECK_THROWS_AS(inverse_sigmoid_epsilon(0, 0), ConfigError);
  CHECK_THROWS_AS(inverse_sigmoid_epsilon(0, -1), ConfigError);
}

TEST_CASE("index aware closed forms") {
  for (std::int64_t v : {2, 3, 17}) CHECK(index_aware_epsilon(0, v, 700) == 700.0 / 701.0);
  CHECK(std::abs(index_aware_epsilon(1000, 2, 1000) - 1000.0 / 1002.0) < 1e-12);
  CHECK(index_aware_epsilon(1000, 5, 200) == doctest::Approx(0.060150375939849642).epsilon(1e-13));
  CHECK(index_aware_epsilon(50, 4, 100) < index_aware_epsilon(50, 2, 100));
  CHECK_THROWS_AS(index_aware_epsilon(0, 1, 100), ConfigError);
  CHECK(index_aware_epsilon(1e12, 2, 100) == 0.0);
}

TEST_CASE("schedules are monotone") {
  const double lambda = 300;
  double prev = inverse_sigmoid_epsilon(0, lambda);
  for (int i = 1; i < 5000; ++i) {
    const double e = inverse_sigmoid_epsilon(i, lambda);
    REQUIRE(e < prev);
    prev = e;
  }
  for (int i = 1; i < 2000; i += 7) {
    for (std::int64_t v = 2; v < 12; ++v) REQUIRE(index_aware_epsilon(i, v + 1, lambda) < index_aware_epsilon(i, v, lambda));
  }
}

TEST_CASE("draw_tau edge cases and frequency") {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    REQUIRE(draw_tau(1.0, rng).tau == 1);
    REQUIRE(draw_tau(0.0, rng).tau == 0);
  }
  const auto d = draw_tau(0.7, rng, InputSource::IntermediateModel);
  CHECK(d.epsilon_used == 0.7);
  CHECK(d.source == (d.tau == 1 ? InputSource::IntermediateModel : InputSource::OwnPrediction));

  int ones = 0;
  for (int k = 0; k < 10000; ++k) ones += draw_tau(0.7, rng).tau;
  CHECK(ones >= 6860);
  CHECK(ones <= 7140);
  CHECK_THROWS_AS(draw_tau(1.5, rng), ConfigError);
  CHECK_THROWS_AS(draw_tau(-0.1, rng), ConfigError);
}

TEST_CASE("mix_inputs") {
  const SeqTensord own({2}, {1, 2});
  const SeqTensord truth({2}, {3, 4});
  CHECK(mix_inputs(1, own, truth) == truth);
  CHECK(mix_inputs(0, own, truth) == own);
  CHECK(mix_inputs(1, own, own) == own);
  CHECK_THROWS_AS(mix_inputs(1, own, SeqTensord({3})), DimensionError);
}

TEST_CASE("odd/even subsampling") {
  SeqTensord seq({6, 1}, {1, 2, 3, 4, 5, 6});
  const auto [odd, even] = subsample_odd_even(seq);
  CHECK(odd == SeqTensord({3, 1}, {1, 3, 5}));
  CHECK(even == SeqTensord({3, 1}, {2, 4, 6}));

  const auto [o37, e37] = subsample_odd_even(SeqTensord({37, 2}));
  CHECK(o37.time_steps() == 19);
  CHECK(e37.time_steps() == 18);

  const auto [o1, e1] = subsample_odd_even(SeqTensord({1, 1}, {9}));
  CHECK(o1.time_steps() == 1);
  CHECK(e1.time_steps() == 0);
  CHECK_THROWS_AS(subsample_odd_even(SeqTensord({0, 1})), DimensionError);
}

TEST_CASE("interleave inverts subsampling") {
  Rng rng(8);
  for (Index t = 1; t <= 100; ++t) {
    const auto seq = randn({t, 3, 2}, 1.0, rng);
    const auto [odd, even] = subsample_odd_even(seq);
    REQUIRE(interleave_odd_even(odd, even) == seq);
  }
}

TEST_CASE("m1_source_index") {
  CHECK(m1_source_index(1).parity == Parity::Odd);
  CHECK(m1_source_index(1).k_half == 1);
  CHECK(m1_source_index(2).parity == Parity::Even);
  CHECK(m1_source_index(2).k_half == 1);
  CHECK(m1_source_index(7).parity == Parity::Odd);
  CHECK(m1_source_index(7).k_half == 4);
  CHECK_THROWS_AS(m1_source_index(0), BoundsError);
}

TEST_CASE("epsilon_for dispatch") {
  ScheduleConfig tf;
  tf.strategy = Strategy::TeacherForcing;
  CHECK(epsilon_for(tf, 12345, 7) == 1.0);

  ScheduleConfig ss;
  ss.lambda = 50;
  CHECK(epsilon_for(ss, 0, 2) == 50.0 / 51.0);
  CHECK(epsilon_for(ss, 80, 9) == inverse_sigmoid_epsilon(80, 50));

  ScheduleConfig tpg;
  tpg.strategy = Strategy::Tpg;
  tpg.lambda = 50;
  tpg.stage1_iters = 100;
  tpg.transition_iters = 300;
  CHECK(epsilon_for(tpg, 99, 5) == 1.0);
  CHECK(epsilon_for(tpg, 100, 5) == 50.0 / 51.0);
  CHECK(epsilon_for(tpg, 150, 5) == index_aware_epsilon(50, 5, 50));
  CHECK(epsilon_for(tpg, 400, 2) == 0.0);
  tpg.index_aware = false;
  CHECK(epsilon_for(tpg, 150, 5) == inverse_sigmoid_epsilon(50, 50));

  tpg.m1_lambda = 20;
  CHECK(m1_epsilon(tpg, 30) == inverse_sigmoid_epsilon(30, 20));
  tpg.m1_lambda = 0;
  CHECK(m1_epsilon(tpg, 30) == inverse_sigmoid_epsilon(30, 50));
}

TEST_CASE("schedule validation") {
  ScheduleConfig c;
  c.strategy = Strategy::Tpg;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.stage1_iters = 1;
  CHECK_NOTHROW(c.validate());
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_strategy("tpg") == Strategy::Tpg);
  CHECK_THROWS_AS(parse_strategy("greedy"), ConfigError);
}
