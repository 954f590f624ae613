#pragma once

// LSTM cell and linear projection with hand-derived gradients.
//
// All operands are column-batched: an input of F features for B samples is an
// F x B matrix, so a single sample is the B = 1 case. Gate rows of the stacked
// weight matrices are ordered (input, forget, candidate, output), each block
// hidden_size rows tall. The cell has no peephole connections.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

#include "tpgf/errors.hpp"
#include "tpgf/rng.hpp"
#include "tpgf/tensor.hpp"

namespace tpgf::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum Gate : Index { kInput = 0, kForget = 1, kCandidate = 2, kOutput = 3 };

template <typename Scalar>
struct LstmParams {
  Matrix<Scalar> input_weights;      // [4C, F_in]
  Matrix<Scalar> recurrent_weights;  // [4C, C]
  Vector<Scalar> bias;               // [4C]

  Index hidden_size() const { return recurrent_weights.cols(); }
  Index input_size() const { return input_weights.cols(); }

  static LstmParams zeros(Index input_size, Index hidden_size) {
    return {Matrix<Scalar>::Zero(4 * hidden_size, input_size),
            Matrix<Scalar>::Zero(4 * hidden_size, hidden_size), Vector<Scalar>::Zero(4 * hidden_size)};
  }

  /// Weights ~ scale * N(0, 1), bias zero.
  static LstmParams random(Index input_size, Index hidden_size, double scale, Rng& rng) {
    LstmParams p = zeros(input_size, hidden_size);
    fill_normal(p.input_weights, scale, rng);
    fill_normal(p.recurrent_weights, scale, rng);
    return p;
  }

  void check() const {
    const Index c = hidden_size();
    if (input_weights.rows() != 4 * c || recurrent_weights.rows() != 4 * c || bias.size() != 4 * c) {
      throw DimensionError("LstmParams: inconsistent extents for hidden size " + std::to_string(c));
    }
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("input_weights", input_weights);
    fn("recurrent_weights", recurrent_weights);
    fn("bias", bias);
  }

 private:
  template <typename M>
  static void fill_normal(M& m, double scale, Rng& rng) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(scale * rng.normal());
  }
};

template <typename Scalar>
struct LstmState {
  Matrix<Scalar> h;  // [C, B]
  Matrix<Scalar> c;  // [C, B]

  static LstmState zeros(Index hidden_size, Index batch) {
    return {Matrix<Scalar>::Zero(hidden_size, batch), Matrix<Scalar>::Zero(hidden_size, batch)};
  }
};

/// Everything lstm_step_backward needs from one forward step.
template <typename Scalar>
struct LstmCache {
  Matrix<Scalar> x;
  Matrix<Scalar> h_prev;
  Matrix<Scalar> c_prev;
  Matrix<Scalar> gates;   // activated gates, [4C, B]
  Matrix<Scalar> tanh_c;  // tanh(c_next)
};

template <typename Scalar>
struct LstmStepResult {
  LstmState<Scalar> state;
  LstmCache<Scalar> cache;
};

template <typename Scalar>
LstmStepResult<Scalar> lstm_step(const Matrix<Scalar>& x, const LstmState<Scalar>& state,
                                 const LstmParams<Scalar>& p) {
  const Index c = p.hidden_size();
  if (x.rows() != p.input_size() || state.h.rows() != c || state.c.rows() != c ||
      state.h.cols() != x.cols() || state.c.cols() != x.cols()) {
    throw DimensionError("lstm_step: input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                         ", state " + std::to_string(state.h.rows()) + "x" + std::to_string(state.h.cols()) +
                         " incompatible with cell (F_in=" + std::to_string(p.input_size()) +
                         ", C=" + std::to_string(c) + ")");
  }

  LstmStepResult<Scalar> out;
  Matrix<Scalar>& gates = out.cache.gates;
  gates.noalias() = p.input_weights * x;
  gates.noalias() += p.recurrent_weights * state.h;
  gates.colwise() += p.bias;

  gates.topRows(2 * c) = sigmoid(gates.topRows(2 * c).array());
  gates.middleRows(2 * c, c) = gates.middleRows(2 * c, c).array().tanh();
  gates.bottomRows(c) = sigmoid(gates.bottomRows(c).array());

  const auto i = gates.middleRows(kInput * c, c).array();
  const auto f = gates.middleRows(kForget * c, c).array();
  const auto g = gates.middleRows(kCandidate * c, c).array();
  const auto o = gates.middleRows(kOutput * c, c).array();

  out.state.c = (f * state.c.array() + i * g).matrix();
  out.cache.tanh_c = out.state.c.array().tanh().matrix();
  out.state.h = (o * out.cache.tanh_c.array()).matrix();

  out.cache.x = x;
  out.cache.h_prev = state.h;
  out.cache.c_prev = state.c;
  return out;
}

template <typename Scalar>
struct LstmBackward {
  Matrix<Scalar> grad_x;
  LstmState<Scalar> grad_prev;  // gradients w.r.t. (h_prev, c_prev)
};

/// Backward pass of one lstm_step. Parameter gradients are accumulated into
/// `param_grads` so a caller can sum over time steps.
template <typename Scalar>
LstmBackward<Scalar> lstm_step_backward(const Matrix<Scalar>& grad_h, const Matrix<Scalar>& grad_c,
                                        const LstmCache<Scalar>& cache, const LstmParams<Scalar>& p,
                                        LstmParams<Scalar>& param_grads) {
  const Index c = p.hidden_size();
  const Index batch = cache.x.cols();
  if (cache.gates.rows() != 4 * c || cache.x.rows() != p.input_size() || grad_h.rows() != c ||
      grad_c.rows() != c || grad_h.cols() != batch || grad_c.cols() != batch) {
    throw std::logic_error("lstm_step_backward: cache does not match parameters or upstream gradients");
  }

  const auto i = cache.gates.middleRows(kInput * c, c).array();
  const auto f = cache.gates.middleRows(kForget * c, c).array();
  const auto g = cache.gates.middleRows(kCandidate * c, c).array();
  const auto o = cache.gates.middleRows(kOutput * c, c).array();
  const auto tc = cache.tanh_c.array();

  const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> dc =
      grad_c.array() + grad_h.array() * o * (Scalar(1) - tc.square());

  Matrix<Scalar> dz(4 * c, batch);
  dz.middleRows(kInput * c, c) = (dc * g * i * (Scalar(1) - i)).matrix();
  dz.middleRows(kForget * c, c) = (dc * cache.c_prev.array() * f * (Scalar(1) - f)).matrix();
  dz.middleRows(kCandidate * c, c) = (dc * i * (Scalar(1) - g.square())).matrix();
  dz.middleRows(kOutput * c, c) = (grad_h.array() * tc * o * (Scalar(1) - o)).matrix();

  param_grads.input_weights.noalias() += dz * cache.x.transpose();
  param_grads.recurrent_weights.noalias() += dz * cache.h_prev.transpose();
  param_grads.bias += dz.rowwise().sum();

  LstmBackward<Scalar> out;
  out.grad_x.noalias() = p.input_weights.transpose() * dz;
  out.grad_prev.h.noalias() = p.recurrent_weights.transpose() * dz;
  out.grad_prev.c = (dc * f).matrix();
  return out;
}

template <typename Scalar>
struct LinearParams {
  Matrix<Scalar> weights;  // [F_out, C]
  Vector<Scalar> bias;     // [F_out]

  Index input_size() const { return weights.cols(); }
  Index output_size() const { return weights.rows(); }

  static LinearParams zeros(Index input_size, Index output_size) {
    return {Matrix<Scalar>::Zero(output_size, input_size), Vector<Scalar>::Zero(output_size)};
  }

  static LinearParams random(Index input_size, Index output_size, double scale, Rng& rng) {
    LinearParams p = zeros(input_size, output_size);
    for (Index k = 0; k < p.weights.size(); ++k) p.weights.data()[k] = static_cast<Scalar>(scale * rng.normal());
    return p;
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("weights", weights);
    fn("bias", bias);
  }
};

template <typename Scalar>
Matrix<Scalar> linear_forward(const Matrix<Scalar>& x, const LinearParams<Scalar>& p) {
  if (x.rows() != p.input_size() || p.bias.size() != p.output_size()) {
    throw DimensionError("linear_forward: input has " + std::to_string(x.rows()) + " rows, layer expects " +
                         std::to_string(p.input_size()));
  }
  Matrix<Scalar> y(p.output_size(), x.cols());
  y.noalias() = p.weights * x;
  y.colwise() += p.bias;
  return y;
}

/// Returns the gradient w.r.t. the layer input `x`; accumulates parameter
/// gradients into `param_grads`.
template <typename Scalar>
Matrix<Scalar> linear_backward(const Matrix<Scalar>& grad_y, const Matrix<Scalar>& x,
                               const LinearParams<Scalar>& p, LinearParams<Scalar>& param_grads) {
  if (grad_y.rows() != p.output_size() || x.rows() != p.input_size() || grad_y.cols() != x.cols()) {
    throw std::logic_error("linear_backward: cached input does not match parameters or upstream gradient");
  }
  param_grads.weights.noalias() += grad_y * x.transpose();
  param_grads.bias += grad_y.rowwise().sum();
  Matrix<Scalar> grad_x(p.input_size(), x.cols());
  grad_x.noalias() = p.weights.transpose() * grad_y;
  return grad_x;
}

}  // namespace tpgf::nn
