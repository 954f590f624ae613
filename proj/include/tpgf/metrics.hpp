#pragma once

#include <Eigen/Dense>

#include <vector>

#include "tpgf/tensor.hpp"

namespace tpgf {

double mse(const SeqTensord& pred, const SeqTensord& target);
double rmse(const SeqTensord& pred, const SeqTensord& target);
double mae(const SeqTensord& pred, const SeqTensord& target);

/// One MSE per time step (frame) of two equally shaped sequences.
std::vector<double> mse_per_frame(const SeqTensord& pred, const SeqTensord& target);

struct SsimOptions {
  double dynamic_range = 1.0;
  int window = 11;
  double sigma = 1.5;
};

/// Mean SSIM over Gaussian windows centred on every pixel, with
/// half-sample symmetric reflection at the borders. Frames smaller than the
/// window in either dimension fall back to one global, uniformly weighted
/// window.
double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const SsimOptions& options = {});

/// SSIM of two flattened (row-major) H x W frames.
double ssim_per_frame(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, Index height, Index width,
                      const SsimOptions& options = {});

/// Per-channel and aggregate error measures over n = steps x locations
/// elements per channel.
struct MetricReport {
  std::vector<double> rmse;  // per channel
  std::vector<double> mae;
  double rmse_all = 0.0;
  double mae_all = 0.0;
  Index n = 0;
};

/// `pred`, `target`: [K, N, F_out].
MetricReport error_report(const SeqTensord& pred, const SeqTensord& target);

}  // namespace tpgf
