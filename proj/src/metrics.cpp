#include "tpgf/metrics.hpp"

#include <cmath>

namespace tpgf {

namespace {

void require_same(const SeqTensord& a, const SeqTensord& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  if (a.size() == 0) throw DimensionError(std::string(op) + ": empty input");
}

// Half-sample symmetric reflection: -1 -> 0, n -> n - 1.
Index reflect(Index k, Index n) {
  while (k < 0 || k >= n) {
    if (k < 0) k = -k - 1;
    if (k >= n) k = 2 * n - k - 1;
  }
  return k;
}

double ssim_formula(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
  return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace

double mse(const SeqTensord& pred, const SeqTensord& target) {
  require_same(pred, target, "mse");
  return (pred.data() - target.data()).squaredNorm() / static_cast<double>(pred.size());
}

double rmse(const SeqTensord& pred, const SeqTensord& target) { return std::sqrt(mse(pred, target)); }

double mae(const SeqTensord& pred, const SeqTensord& target) {
  require_same(pred, target, "mae");
  return (pred.data() - target.data()).cwiseAbs().sum() / static_cast<double>(pred.size());
}

std::vector<double> mse_per_frame(const SeqTensord& pred, const SeqTensord& target) {
  require_same(pred, target, "mse_per_frame");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(pred.time_steps()));
  for (Index t = 0; t < pred.time_steps(); ++t) {
    out.push_back((pred.frame(t) - target.frame(t)).squaredNorm() / static_cast<double>(pred.frame_size()));
  }
  return out;
}

double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const SsimOptions& options) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
    throw DimensionError("ssim: frames must be non-empty and equally sized");
  }
  const double c1 = std::pow(0.01 * options.dynamic_range, 2);
  const double c2 = std::pow(0.03 * options.dynamic_range, 2);
  const Index h = a.rows();
  const Index w = a.cols();
  const int win = options.window;

  if (h < win || w < win) {
    const double mx = a.mean();
    const double my = b.mean();
    const double n = static_cast<double>(a.size());
    const double vx = (a.array() - mx).square().sum() / n;
    const double vy = (b.array() - my).square().sum() / n;
    const double cxy = ((a.array() - mx) * (b.array() - my)).sum() / n;
    return ssim_formula(mx, my, vx, vy, cxy, c1, c2);
  }

  const int radius = win / 2;
  Eigen::VectorXd g(win);
  for (int k = 0; k < win; ++k) {
    const double d = k - radius;
    g(k) = std::exp(-d * d / (2.0 * options.sigma * options.sigma));
  }
  g /= g.sum();
  const Eigen::MatrixXd kernel = g * g.transpose();

  Eigen::MatrixXd pa(win, win), pb(win, win);
  double total = 0.0;
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      for (int i = 0; i < win; ++i) {
        const Index rr = reflect(r + i - radius, h);
        for (int j = 0; j < win; ++j) {
          const Index cc = reflect(c + j - radius, w);
          pa(i, j) = a(rr, cc);
          pb(i, j) = b(rr, cc);
        }
      }
      const double mx = (kernel.array() * pa.array()).sum();
      const double my = (kernel.array() * pb.array()).sum();
      const auto da = pa.array() - mx;
      const auto db = pb.array() - my;
      const double vx = (kernel.array() * da.square()).sum();
      const double vy = (kernel.array() * db.square()).sum();
      const double cxy = (kernel.array() * da * db).sum();
      total += ssim_formula(mx, my, vx, vy, cxy, c1, c2);
    }
  }
  return total / static_cast<double>(h * w);
}

double ssim_per_frame(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, Index height, Index width,
                      const SsimOptions& options) {
  if (pred.size() != height * width || target.size() != height * width) {
    throw DimensionError("ssim_per_frame: frame size does not match grid " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::MatrixXd a = Eigen::Map<const RowMajor>(pred.data(), height, width);
  const Eigen::MatrixXd b = Eigen::Map<const RowMajor>(target.data(), height, width);
  return ssim(a, b, options);
}

MetricReport error_report(const SeqTensord& pred, const SeqTensord& target) {
  require_same(pred, target, "error_report");
  if (pred.rank() != 3) throw DimensionError("error_report: expected [K, N, F_out], got " + shape_string(pred.shape()));
  const Index channels = pred.extent(2);
  MetricReport report;
  report.n = pred.extent(0) * pred.extent(1);
  report.rmse.assign(static_cast<std::size_t>(channels), 0.0);
  report.mae.assign(static_cast<std::size_t>(channels), 0.0);
  for (Index k = 0; k < pred.size(); ++k) {
    const double r = pred.data()(k) - target.data()(k);
    const auto ch = static_cast<std::size_t>(k % channels);
    report.rmse[ch] += r * r;
    report.mae[ch] += std::abs(r);
  }
  double sq = 0.0, ab = 0.0;
  for (std::size_t ch = 0; ch < report.rmse.size(); ++ch) {
    sq += report.rmse[ch];
    ab += report.mae[ch];
    report.rmse[ch] = std::sqrt(report.rmse[ch] / static_cast<double>(report.n));
    report.mae[ch] /= static_cast<double>(report.n);
  }
  report.rmse_all = std::sqrt(sq / static_cast<double>(pred.size()));
  report.mae_all = ab / static_cast<double>(pred.size());
  return report;
}

}  // namespace tpgf
