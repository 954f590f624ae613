#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tpgf/errors.hpp"
#include "tpgf/rng.hpp"

namespace tpgf {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline Index shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Rank 1-3 dense array laid out row-major over [time, space, channel].
///
/// A time step ("frame") is the contiguous block of space*channel values,
/// so frame(t) is a cheap Eigen segment.
template <typename Scalar>
class SeqTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  SeqTensor() : shape_{0} {}

  explicit SeqTensor(Shape shape) : shape_(std::move(shape)) {
    check_rank();
    data_ = Vector::Zero(shape_product(shape_));
  }

  SeqTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank();
    if (shape_product(shape_) != data_.size()) {
      throw DimensionError("SeqTensor: shape " + shape_string(shape_) + " holds " +
                           std::to_string(shape_product(shape_)) + " values, got " +
                           std::to_string(data_.size()));
    }
  }

  SeqTensor(Shape shape, std::initializer_list<Scalar> values)
      : SeqTensor(std::move(shape), Eigen::Map<const Vector>(values.begin(), values.size())) {}

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index extent(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }

  Index time_steps() const { return shape_[0]; }
  /// Number of values in one time step.
  Index frame_size() const {
    Index n = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
    return n;
  }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  auto frame(Index t) { return data_.segment(t * frame_size(), frame_size()); }
  auto frame(Index t) const { return data_.segment(t * frame_size(), frame_size()); }

  Scalar& operator()(Index t) { return data_(t); }
  Scalar operator()(Index t) const { return data_(t); }
  Scalar& operator()(Index t, Index n) { return data_(t * shape_[1] + n); }
  Scalar operator()(Index t, Index n) const { return data_(t * shape_[1] + n); }
  Scalar& operator()(Index t, Index n, Index f) { return data_((t * shape_[1] + n) * shape_[2] + f); }
  Scalar operator()(Index t, Index n, Index f) const {
    return data_((t * shape_[1] + n) * shape_[2] + f);
  }

  /// Row-major matrix view of a rank-2 tensor (rank 1 is viewed as a column).
  Eigen::Map<const RowMajorMatrix> as_matrix() const {
    return {data_.data(), shape_[0], rank() == 1 ? 1 : shape_[1]};
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const SeqTensor& a, const SeqTensor& b) {
    if (a.shape_ != b.shape_) return false;
    // Bitwise comparison, so -0.0 and NaN payloads count as differences.
    return std::equal(a.data_.data(), a.data_.data() + a.data_.size(), b.data_.data(),
                      [](Scalar x, Scalar y) { return std::memcmp(&x, &y, sizeof(Scalar)) == 0; });
  }

 private:
  void check_rank() const {
    if (shape_.empty() || shape_.size() > 3) {
      throw DimensionError("SeqTensor: rank must be 1-3, got shape " + shape_string(shape_));
    }
    for (Index e : shape_) {
      if (e < 0) throw DimensionError("SeqTensor: negative extent in " + shape_string(shape_));
    }
  }

  Shape shape_;
  Vector data_;
};

using SeqTensord = SeqTensor<double>;

namespace detail {
template <typename Scalar>
void require_same_shape(const SeqTensor<Scalar>& a, const SeqTensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}
}  // namespace detail

/// Matrix product of two rank-2 tensors.
template <typename Scalar>
SeqTensor<Scalar> matmul(const SeqTensor<Scalar>& a, const SeqTensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  typename SeqTensor<Scalar>::RowMajorMatrix product = a.as_matrix() * b.as_matrix();
  return SeqTensor<Scalar>({a.extent(0), b.extent(1)},
                           Eigen::Map<const typename SeqTensor<Scalar>::Vector>(product.data(), product.size()));
}

template <typename Scalar>
SeqTensor<Scalar> add(const SeqTensor<Scalar>& a, const SeqTensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return SeqTensor<Scalar>(a.shape(), a.data() + b.data());
}

template <typename Scalar>
SeqTensor<Scalar> sub(const SeqTensor<Scalar>& a, const SeqTensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return SeqTensor<Scalar>(a.shape(), a.data() - b.data());
}

/// Hadamard product.
template <typename Scalar>
SeqTensor<Scalar> mul(const SeqTensor<Scalar>& a, const SeqTensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return SeqTensor<Scalar>(a.shape(), a.data().cwiseProduct(b.data()));
}

template <typename Scalar>
SeqTensor<Scalar> scale(const SeqTensor<Scalar>& a, Scalar factor) {
  return SeqTensor<Scalar>(a.shape(), a.data() * factor);
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

template <typename Scalar>
SeqTensor<Scalar> sigmoid(const SeqTensor<Scalar>& a) {
  return SeqTensor<Scalar>(a.shape(), sigmoid(a.data().array()).matrix());
}

template <typename Scalar>
SeqTensor<Scalar> tanh(const SeqTensor<Scalar>& a) {
  return SeqTensor<Scalar>(a.shape(), a.data().array().tanh().matrix());
}

/// I.i.d. N(0, scale^2) entries; advances rng.
template <typename Scalar = double>
SeqTensor<Scalar> randn(const Shape& shape, double scale, Rng& rng) {
  if (!(scale > 0.0)) throw ConfigError("randn: scale must be positive, got " + std::to_string(scale));
  SeqTensor<Scalar> out(shape);
  for (Index i = 0; i < out.size(); ++i) out.data()(i) = static_cast<Scalar>(scale * rng.normal());
  return out;
}

/// Gathers the listed time steps in order.
template <typename Scalar>
SeqTensor<Scalar> slice_time(const SeqTensor<Scalar>& x, std::span<const Index> indices) {
  Shape shape = x.shape();
  shape[0] = static_cast<Index>(indices.size());
  SeqTensor<Scalar> out(shape);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index t = indices[k];
    if (t < 0 || t >= x.time_steps()) {
      throw BoundsError("slice_time: index " + std::to_string(t) + " outside [0, " +
                        std::to_string(x.time_steps()) + ")");
    }
    out.frame(static_cast<Index>(k)) = x.frame(t);
  }
  return out;
}

template <typename Scalar>
SeqTensor<Scalar> slice_time(const SeqTensor<Scalar>& x, std::initializer_list<Index> indices) {
  return slice_time(x, std::span<const Index>(indices.begin(), indices.size()));
}

}  // namespace tpgf
