#pragma once

// Dense layers, an LSTM cell and diagonal-Gaussian primitives. Everything
// here is a template over the value type: `Tensor` evaluates directly, `Var`
// records onto a tape.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>

#include "vrnd/autodiff.hpp"
#include "vrnd/rng.hpp"
#include "vrnd/tensor.hpp"

namespace vrnd {

inline constexpr double kLogVarMin = -14.0;
inline constexpr double kLogVarMax = 14.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

enum class Activation { linear, tanh, sigmoid, softplus };

template <class T>
struct DenseT {
  T weight;  // [in x out]
  T bias;    // [out]
  Activation activation = Activation::linear;
};
using DenseLayer = DenseT<Tensor>;

// Gates are packed along the last axis in the order input, forget, candidate, output.
template <class T>
struct LstmCellT {
  T w_input;   // [in x 4H]
  T w_hidden;  // [H x 4H]
  T bias;      // [4H]
  std::size_t hidden = 0;
};
using LstmCell = LstmCellT<Tensor>;

template <class T>
struct GaussianParamsT {
  T mean;
  T log_var;  // natural log of the per-dimension variance
};
using GaussianParams = GaussianParamsT<Tensor>;

// Rebuild a parameter struct with every tensor passed through `f`.
template <class T, class F>
auto map_params(const DenseT<T>& l, F&& f) {
  using U = decltype(f(l.weight));
  return DenseT<U>{f(l.weight), f(l.bias), l.activation};
}

template <class T, class F>
auto map_params(const LstmCellT<T>& c, F&& f) {
  using U = decltype(f(c.w_input));
  return LstmCellT<U>{f(c.w_input), f(c.w_hidden), f(c.bias), c.hidden};
}

// Visit every tensor with a dotted name.
template <class T, class F>
void visit_params(DenseT<T>& l, const std::string& prefix, F&& f) {
  f(prefix + ".weight", l.weight);
  f(prefix + ".bias", l.bias);
}
template <class T, class F>
void visit_params(const DenseT<T>& l, const std::string& prefix, F&& f) {
  f(prefix + ".weight", l.weight);
  f(prefix + ".bias", l.bias);
}

template <class T, class F>
void visit_params(LstmCellT<T>& c, const std::string& prefix, F&& f) {
  f(prefix + ".w_input", c.w_input);
  f(prefix + ".w_hidden", c.w_hidden);
  f(prefix + ".bias", c.bias);
}
template <class T, class F>
void visit_params(const LstmCellT<T>& c, const std::string& prefix, F&& f) {
  f(prefix + ".w_input", c.w_input);
  f(prefix + ".w_hidden", c.w_hidden);
  f(prefix + ".bias", c.bias);
}

// ---------------------------------------------------------------------------
// Initialization

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor init_weight(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

inline DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, RngStream& rng) {
  return DenseLayer{init_weight(in, out, rng), Tensor({out}, 0.0), act};
}

inline DenseLayer zero_dense(std::size_t in, std::size_t out, Activation act) {
  return DenseLayer{Tensor({in, out}, 0.0), Tensor({out}, 0.0), act};
}

inline LstmCell make_lstm(std::size_t in, std::size_t hidden, RngStream& rng) {
  LstmCell cell{init_weight(in, 4 * hidden, rng), init_weight(hidden, 4 * hidden, rng),
                Tensor({4 * hidden}, 0.0), hidden};
  for (std::size_t j = hidden; j < 2 * hidden; ++j) cell.bias[j] = 1.0;
  return cell;
}

inline LstmCell zero_lstm(std::size_t in, std::size_t hidden) {
  return LstmCell{Tensor({in, 4 * hidden}, 0.0), Tensor({hidden, 4 * hidden}, 0.0),
                  Tensor({4 * hidden}, 0.0), hidden};
}

// ---------------------------------------------------------------------------
// Forward passes

template <class T>
T activate(const T& x, Activation act) {
  switch (act) {
    case Activation::tanh:
      return tanh(x);
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::softplus:
      return softplus(x);
    case Activation::linear:
      break;
  }
  return x;
}

namespace detail {

template <class T>
T as_batch(const T& x) {
  const Tensor& v = value_of(x);
  if (v.rank() == 2) return x;
  if (v.rank() == 1) return reshape(x, Shape{1, v.size()});
  throw DimensionError("expected a vector or matrix input, got " + shape_str(v.shape()));
}

template <class T>
T like_input(const T& y, const T& x) {
  const Tensor& v = value_of(x);
  if (v.rank() == 1) return reshape(y, Shape{value_of(y).size()});
  return y;
}

}  // namespace detail

// activation(x W + b) for x of shape [batch x in] or [in].
template <class T>
T dense_forward(const DenseT<T>& layer, const T& x) {
  const Tensor& xv = value_of(x);
  const Tensor& w = value_of(layer.weight);
  if (xv.cols() != w.dim(0)) {
    throw DimensionError("dense_forward: input " + shape_str(xv.shape()) + " does not fit weight " +
                         shape_str(w.shape()));
  }
  T xb = detail::as_batch(x);
  T y = activate(add_rowvec(matmul(xb, layer.weight), layer.bias), layer.activation);
  return detail::like_input(y, x);
}

// One LSTM update. Returns (h, c).
template <class T>
std::pair<T, T> lstm_step(const LstmCellT<T>& cell, const T& x, const T& h_prev, const T& c_prev) {
  const std::size_t H = cell.hidden;
  const Tensor& xv = value_of(x);
  const Tensor& hv = value_of(h_prev);
  const Tensor& cv = value_of(c_prev);
  if (xv.cols() != value_of(cell.w_input).dim(0) || hv.cols() != H || cv.cols() != H ||
      hv.shape() != cv.shape() || xv.rows() != hv.rows()) {
    throw DimensionError("lstm_step: shapes x=" + shape_str(xv.shape()) + " h=" + shape_str(hv.shape()) +
                         " c=" + shape_str(cv.shape()) + " do not fit cell with input " +
                         std::to_string(value_of(cell.w_input).dim(0)) + ", hidden " + std::to_string(H));
  }
  T xb = detail::as_batch(x);
  T hb = detail::as_batch(h_prev);
  T cb = detail::as_batch(c_prev);
  T gates = add_rowvec(add(matmul(xb, cell.w_input), matmul(hb, cell.w_hidden)), cell.bias);
  T i = sigmoid(slice_cols(gates, 0, H));
  T f = sigmoid(slice_cols(gates, H, 2 * H));
  T g = tanh(slice_cols(gates, 2 * H, 3 * H));
  T o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
  T c = add(mul(f, cb), mul(i, g));
  T h = mul(o, tanh(c));
  return {detail::like_input(h, h_prev), detail::like_input(c, c_prev)};
}

// Mean from one linear layer, log-variance from another clamped to [-14, 14].
template <class T>
GaussianParamsT<T> gaussian_head_forward(const DenseT<T>& mean_layer, const DenseT<T>& var_layer, const T& x) {
  T mu = dense_forward(mean_layer, x);
  T lv = clamp(dense_forward(var_layer, x), kLogVarMin, kLogVarMax);
  return {mu, lv};
}

// Log density of x under a diagonal Gaussian, summed over the last axis.
// A [batch x d] input yields one value per row; a [d] input yields shape [1].
template <class T>
T gaussian_log_density(const GaussianParamsT<T>& p, const T& x) {
  const Tensor& xv = value_of(x);
  if (xv.shape() != value_of(p.mean).shape() || xv.shape() != value_of(p.log_var).shape()) {
    throw DimensionError("gaussian_log_density: x " + shape_str(xv.shape()) + " vs mean " +
                         shape_str(value_of(p.mean).shape()));
  }
  const std::size_t d = xv.cols();
  T diff = sub(x, p.mean);
  T scaled = mul(mul(diff, diff), exp(neg(p.log_var)));
  T per_dim = add(p.log_var, scaled);
  T total = sum(per_dim, xv.rank() == 2 ? 1 : 0);
  return add_scalar(scale(total, -0.5), -kHalfLog2Pi * static_cast<double>(d));
}

// KL(q || p) for diagonal Gaussians, summed over the last axis. Written as
// 0.5 * [expm1(a) - a + (mu_q - mu_p)^2 / var_p] with a = log_var_q - log_var_p
// so that it is non-negative in floating point and exactly zero when q == p.
template <class T>
T kl_diag_gaussians(const GaussianParamsT<T>& q, const GaussianParamsT<T>& p) {
  const Tensor& qm = value_of(q.mean);
  if (qm.shape() != value_of(p.mean).shape() || qm.shape() != value_of(q.log_var).shape() ||
      qm.shape() != value_of(p.log_var).shape()) {
    throw DimensionError("kl_diag_gaussians: dimension mismatch " + shape_str(qm.shape()) + " vs " +
                         shape_str(value_of(p.mean).shape()));
  }
  T a = sub(q.log_var, p.log_var);
  T shape_term = sub(expm1(a), a);
  T diff = sub(q.mean, p.mean);
  T shift_term = mul(mul(diff, diff), exp(neg(p.log_var)));
  T total = sum(add(shape_term, shift_term), qm.rank() == 2 ? 1 : 0);
  return scale(total, 0.5);
}

// z = mean + exp(log_var / 2) * eps with eps ~ N(0, I) drawn row-major from rng.
// eps is a constant, so gradients reach mean and log_var only.
template <class T>
T reparameterize_sample(const GaussianParamsT<T>& q, RngStream& rng) {
  const Tensor& m = value_of(q.mean);
  Tensor eps(m.shape(), rng.normals(m.size()));
  return add(q.mean, mul(exp(scale(q.log_var, 0.5)), constant_like(q.mean, std::move(eps))));
}

}  // namespace vrnd
