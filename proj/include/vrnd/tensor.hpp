#pragma once

// Dense row-major tensors of doubles and the value-level kernels that the
// autodiff tape records. Every kernel validates shapes and rejects
// non-finite results, so a Tensor returned from here is always finite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vrnd/errors.hpp"

namespace vrnd {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
 public:
  // A scalar zero.
  Tensor() : shape_{1}, data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_dims();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (shape_numel(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> data;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged rows in Tensor::from_rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
  }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_, 0.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  // Matrix view helpers: rank-1 tensors act as a single row.
  std::size_t rows() const noexcept { return rank() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  double item() const {
    if (data_.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

namespace kernels {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
inline MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

inline void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  auto out = zip(a, b, "add", [](double x, double y) { return x + y; });
  require_finite(out, "add");
  return out;
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  auto out = zip(a, b, "sub", [](double x, double y) { return x - y; });
  require_finite(out, "sub");
  return out;
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  auto out = zip(a, b, "mul", [](double x, double y) { return x * y; });
  require_finite(out, "mul");
  return out;
}
inline Tensor neg(const Tensor& a) {
  return map(a, [](double x) { return -x; });
}
inline Tensor scale(const Tensor& a, double c) {
  auto out = map(a, [c](double x) { return c * x; });
  require_finite(out, "scale");
  return out;
}
inline Tensor add_scalar(const Tensor& a, double c) {
  auto out = map(a, [c](double x) { return x + c; });
  require_finite(out, "add_scalar");
  return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  require_finite(out, "matmul");
  return out;
}

// a^T b without materializing the transpose.
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("matmul_tn: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  Tensor out({a.dim(1), b.dim(1)});
  as_matrix(out).noalias() = as_matrix(a).transpose() * as_matrix(b);
  return out;
}

// a b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(0)});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return out;
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline Tensor tanh(const Tensor& a) {
  return map(a, [](double x) { return std::tanh(x); });
}
inline Tensor sigmoid(const Tensor& a) { return map(a, sigmoid_scalar); }
inline Tensor softplus(const Tensor& a) { return map(a, softplus_scalar); }
inline Tensor exp(const Tensor& a) {
  auto out = map(a, [](double x) { return std::exp(x); });
  require_finite(out, "exp");
  return out;
}
inline Tensor expm1(const Tensor& a) {
  auto out = map(a, [](double x) { return std::expm1(x); });
  require_finite(out, "expm1");
  return out;
}
inline Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) throw NumericError("log of non-positive value " + std::to_string(x));
  }
  return map(a, [](double x) { return std::log(x); });
}
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  return map(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
}

// Reduction over one axis of a rank-1 or rank-2 tensor. Reducing a rank-1
// tensor (or the only axis left) yields shape [1].
inline Tensor sum(const Tensor& a, std::size_t axis) {
  if (a.rank() == 1) {
    if (axis != 0) throw DimensionError("sum: axis out of range for " + shape_str(a.shape()));
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::scalar(s);
  }
  if (a.rank() != 2 || axis > 1) throw DimensionError("sum: unsupported axis for " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (axis == 0) {
    Tensor out({c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += a.at(i, j);
    return out;
  }
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += a.at(i, j);
    out[i] = s;
  }
  return out;
}

inline Tensor mean(const Tensor& a, std::size_t axis) {
  const std::size_t n = a.rank() == 1 ? a.size() : a.dim(axis > 1 ? 0 : axis);
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto out = Tensor::scalar(s);
  require_finite(out, "sum_all");
  return out;
}

// Concatenate along the last axis; leading dimensions must agree.
inline Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() == 0 || a.rank() > 2 ||
      (a.rank() == 2 && a.dim(0) != b.dim(0))) {
    throw DimensionError("concat: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  Shape shape = a.shape();
  shape.back() = ca + cb;
  Tensor out(shape);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data().begin() + i * ca, ca, out.data().begin() + i * (ca + cb));
    std::copy_n(b.data().begin() + i * cb, cb, out.data().begin() + i * (ca + cb) + ca);
  }
  return out;
}

// Adds a length-n vector to every row of an [m x n] matrix.
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.rank() != 1 || v.dim(0) != a.dim(1)) {
    throw DimensionError("add_rowvec: cannot broadcast " + shape_str(v.shape()) + " over rows of " +
                         shape_str(a.shape()));
  }
  Tensor out = a;
  const std::size_t c = a.dim(1);
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += v[j];
  require_finite(out, "add_rowvec");
  return out;
}

// Rows [begin, end) of a rank-2 tensor, or elements [begin, end) of a rank-1 one.
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t n = a.rank() == 1 ? a.size() : a.dim(0);
  if (a.rank() > 2 || begin >= end || end > n) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t stride = a.rank() == 1 ? 1 : a.dim(1);
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<double> data(a.data().begin() + begin * stride, a.data().begin() + end * stride);
  return Tensor(shape, std::move(data));
}

// Columns [begin, end) along the last axis.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t c = a.cols();
  if (a.rank() == 0 || a.rank() > 2 || begin >= end || end > c) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_str(a.shape()));
  }
  Shape shape = a.shape();
  shape.back() = end - begin;
  Tensor out(shape);
  const std::size_t w = end - begin;
  for (std::size_t i = 0; i < a.rows(); ++i)
    std::copy_n(a.data().begin() + i * c + begin, w, out.data().begin() + i * w);
  return out;
}

}  // namespace kernels

}  // namespace vrnd
