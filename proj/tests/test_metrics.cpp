#include <doctest.h>

#include <cmath>

#include "tpgf/metrics.hpp"

using namespace tpgf;

namespace {

Eigen::MatrixXd wave(Index h, Index w) {
  Eigen::MatrixXd m(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) m(r, c) = (std::sin(0.7 * static_cast<double>(r)) + std::cos(1.3 * static_cast<double>(c))) / 4 + 0.5;
  return m;
}

}  // namespace

TEST_CASE("rmse and mae fixtures") {
  const SeqTensord a({2}, {1, 2});
  CHECK(rmse(a, a) == 0.0);
  CHECK(mae(a, a) == 0.0);
  SeqTensord three({4});
  three.data().setConstant(3);
  CHECK(rmse(three, SeqTensord({4})) == 3.0);
  CHECK(rmse(SeqTensord({2}, {3, 4}), SeqTensord({2})) == std::sqrt(25.0 / 2.0));
  CHECK(mae(SeqTensord({2}, {-1, 3}), SeqTensord({2})) == 2.0);
  CHECK_THROWS_AS(rmse(a, SeqTensord({3})), DimensionError);
  CHECK_THROWS_AS(mae(a, SeqTensord({3})), DimensionError);
}

TEST_CASE("mae never exceeds rmse and metrics ignore time order") {
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const auto p = randn({5, 3, 2}, 1.0, rng);
    const auto t = randn({5, 3, 2}, 2.0, rng);
    REQUIRE(mae(p, t) <= rmse(p, t) + 1e-15);
    const auto pr = slice_time(p, {4, 2, 0, 1, 3});
    const auto tr = slice_time(t, {4, 2, 0, 1, 3});
    REQUIRE(std::abs(rmse(pr, tr) - rmse(p, t)) < 1e-12);
    REQUIRE(std::abs(mse(p, t) - rmse(p, t) * rmse(p, t)) < 1e-12);
  }
}

TEST_CASE("mse per frame") {
  Rng rng(5);
  const auto p = randn({4, 6}, 1.0, rng);
  CHECK(mse_per_frame(p, p) == std::vector<double>(4, 0.0));
  SeqTensord q = p;
  q.frame(2).array() += 0.5;
  const auto per = mse_per_frame(q, p);
  CHECK(per[2] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(per[0] == 0.0);
  const auto t = randn({4, 6}, 1.0, rng);
  const auto all = mse_per_frame(p, t);
  double mean = 0;
  for (double v : all) mean += v / 4;
  CHECK(mean == doctest::Approx(mse(p, t)).epsilon(1e-12));
  CHECK_THROWS_AS(mse_per_frame(p, SeqTensord({3, 6})), DimensionError);
}

TEST_CASE("ssim of identical frames is one") {
  const auto a = wave(16, 16);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  const Eigen::MatrixXd small = wave(5, 7);
  CHECK(ssim(small, small) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ssim of constant frames follows the closed form") {
  const double c1 = 1e-4;
  for (auto [x, y] : {std::pair{0.2, 0.7}, std::pair{0.0, 1.0}, std::pair{0.5, 0.5}}) {
    const double expected = (2 * x * y + c1) / (x * x + y * y + c1);
    CHECK(std::abs(ssim(Eigen::MatrixXd::Constant(16, 16, x), Eigen::MatrixXd::Constant(16, 16, y)) - expected) < 1e-12);
    CHECK(std::abs(ssim(Eigen::MatrixXd::Constant(4, 4, x), Eigen::MatrixXd::Constant(4, 4, y)) - expected) < 1e-12);
  }
}

TEST_CASE("ssim matches the reference filter implementation") {
  Eigen::MatrixXd checker(16, 16);
  for (Index r = 0; r < 16; ++r)
    for (Index c = 0; c < 16; ++c) checker(r, c) = static_cast<double>((r / 2 + c / 2) % 2);
  const double inverse = ssim(checker, (1.0 - checker.array()).matrix());
  CHECK(inverse < 0.0);
  CHECK(std::abs(inverse - -0.98875671252418429) < 1e-10);

  const auto x = wave(16, 16);
  CHECK(std::abs(ssim(x, x.array().square().matrix()) - 0.85881818271084043) < 1e-10);
  const auto rect = wave(12, 20);
  CHECK(std::abs(ssim(rect, rect.array().square().matrix()) - 0.85740044379113001) < 1e-10);
}

TEST_CASE("ssim is symmetric and bounded") {
  Rng rng(6);
  for (int k = 0; k < 10; ++k) {
    Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(16, 16, [&] { return rng.uniform(); });
    Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(16, 16, [&] { return rng.uniform(); });
    const double ab = ssim(a, b);
    REQUIRE(std::abs(ab - ssim(b, a)) < 1e-14);
    REQUIRE(ab < 1.0);
  }
}

TEST_CASE("ssim per frame uses row-major grids") {
  const auto a = wave(12, 20);
  const auto b = a.array().square().matrix().eval();
  Eigen::VectorXd va(240), vb(240);
  for (Index r = 0; r < 12; ++r)
    for (Index c = 0; c < 20; ++c) {
      va(r * 20 + c) = a(r, c);
      vb(r * 20 + c) = b(r, c);
    }
  CHECK(ssim_per_frame(va, vb, 12, 20) == ssim(a, b));
  CHECK_THROWS_AS(ssim_per_frame(va, vb, 16, 16), DimensionError);
}

TEST_CASE("error report per channel") {
  SeqTensord p({2, 3, 2}), t({2, 3, 2});
  for (Index k = 0; k < p.size(); ++k) p.data()(k) = k % 2 == 0 ? 1.0 : -2.0;
  const auto r = error_report(p, t);
  CHECK(r.n == 6);
  CHECK(r.rmse[0] == 1.0);
  CHECK(r.rmse[1] == 2.0);
  CHECK(r.mae[1] == 2.0);
  CHECK(r.rmse_all == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
  CHECK(r.mae_all == 1.5);
}
