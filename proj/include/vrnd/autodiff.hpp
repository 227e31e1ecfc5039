#pragma once

// Define-by-run reverse-mode automatic differentiation.
//
// A Tape records every primitive applied to Var handles together with a
// closure computing the vector-Jacobian product. The same primitives are
// available on plain Tensors (no recording), so model code written as a
// template over the value type runs either way with bit-identical forwards.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vrnd/errors.hpp"
#include "vrnd/tensor.hpp"

namespace vrnd {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

using Gradients = std::map<std::size_t, Tensor>;

class Tape {
 public:
  // Accumulates adjoints during the reverse sweep.
  class GradSink {
   public:
    GradSink(Tape& tape, std::vector<Tensor>& grads, std::vector<char>& has)
        : tape_(tape), grads_(grads), has_(has) {}

    const Tensor& value(std::size_t id) const { return tape_.nodes_[id].value; }
    const Tensor& output() const { return tape_.nodes_[current_].value; }
    bool wants(std::size_t id) const { return tape_.nodes_[id].requires_grad; }

    void add(std::size_t id, Tensor g) {
      if (!wants(id)) return;
      if (!has_[id]) {
        grads_[id] = std::move(g);
        has_[id] = 1;
        return;
      }
      auto dst = grads_[id].data();
      auto src = g.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

   private:
    friend class Tape;
    Tape& tape_;
    std::vector<Tensor>& grads_;
    std::vector<char>& has_;
    std::size_t current_ = 0;
  };

  using Backward = std::function<void(const Tensor& grad_out, GradSink& sink)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable leaf; receives a gradient entry from backward().
  Var variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, true, true});
    return Var{this, nodes_.size() - 1};
  }

  // Leaf that never receives a gradient.
  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, false});
    return Var{this, nodes_.size() - 1};
  }

  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs_grad = false;
    for (const Var& v : inputs) {
      if (v.tape != this) throw ContractError("operands recorded on different tapes");
      needs_grad = needs_grad || nodes_[v.id].requires_grad;
    }
    Node node{std::move(value), {}, needs_grad, false};
    if (needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool is_variable(std::size_t id) const { return nodes_.at(id).variable; }

  std::vector<std::size_t> variables() const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].variable) ids.push_back(i);
    return ids;
  }

  // Reverse sweep from a scalar loss. Every variable on the tape gets an
  // entry; variables the loss does not depend on get zeros.
  Gradients backward(Var loss) {
    if (loss.tape != this) throw ContractError("loss belongs to a different tape");
    const Tensor& lv = nodes_.at(loss.id).value;
    if (lv.size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " + shape_str(lv.shape()));
    }
    std::vector<Tensor> grads(loss.id + 1);
    std::vector<char> has(loss.id + 1, 0);
    GradSink sink(*this, grads, has);
    if (nodes_[loss.id].requires_grad) {
      grads[loss.id] = Tensor(lv.shape(), 1.0);
      has[loss.id] = 1;
    }
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!has[i]) continue;
      Node& node = nodes_[i];
      if (node.backward) {
        sink.current_ = i;
        node.backward(grads[i], sink);
        if (!node.variable) grads[i] = Tensor();
      }
    }
    Gradients out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].variable) continue;
      if (i <= loss.id && has[i]) {
        out.emplace(i, std::move(grads[i]));
      } else {
        out.emplace(i, Tensor::zeros_like(nodes_[i].value));
      }
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Backward backward;
    bool requires_grad = false;
    bool variable = false;
  };

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

// ---------------------------------------------------------------------------
// Primitives on plain tensors (inference path).

inline Tensor add(const Tensor& a, const Tensor& b) { return kernels::add(a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return kernels::sub(a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return kernels::mul(a, b); }
inline Tensor neg(const Tensor& a) { return kernels::neg(a); }
inline Tensor scale(const Tensor& a, double c) { return kernels::scale(a, c); }
inline Tensor add_scalar(const Tensor& a, double c) { return kernels::add_scalar(a, c); }
inline Tensor matmul(const Tensor& a, const Tensor& b) { return kernels::matmul(a, b); }
inline Tensor tanh(const Tensor& a) { return kernels::tanh(a); }
inline Tensor sigmoid(const Tensor& a) { return kernels::sigmoid(a); }
inline Tensor exp(const Tensor& a) { return kernels::exp(a); }
inline Tensor expm1(const Tensor& a) { return kernels::expm1(a); }
inline Tensor log(const Tensor& a) { return kernels::log(a); }
inline Tensor softplus(const Tensor& a) { return kernels::softplus(a); }
inline Tensor clamp(const Tensor& a, double lo, double hi) { return kernels::clamp(a, lo, hi); }
inline Tensor sum(const Tensor& a, std::size_t axis) { return kernels::sum(a, axis); }
inline Tensor mean(const Tensor& a, std::size_t axis) { return kernels::mean(a, axis); }
inline Tensor sum_all(const Tensor& a) { return kernels::sum_all(a); }
inline Tensor concat(const Tensor& a, const Tensor& b) { return kernels::concat(a, b); }
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) { return kernels::add_rowvec(a, v); }
inline Tensor slice_rows(const Tensor& a, std::size_t b, std::size_t e) { return kernels::slice_rows(a, b, e); }
inline Tensor slice_cols(const Tensor& a, std::size_t b, std::size_t e) { return kernels::slice_cols(a, b, e); }
inline Tensor reshape(const Tensor& a, Shape shape) { return a.reshaped(std::move(shape)); }

inline const Tensor& value_of(const Tensor& t) { return t; }
inline const Tensor& value_of(const Var& v) { return v.value(); }

// Lift a constant into the same evaluation mode as `like`.
inline Tensor constant_like(const Tensor&, Tensor t) { return t; }
inline Var constant_like(const Var& like, Tensor t) { return like.tape->constant(std::move(t)); }

// ---------------------------------------------------------------------------
// Recorded primitives.

inline Var add(Var a, Var b) {
  return a.tape->record(kernels::add(a.value(), b.value()), {a, b},
                        [a, b](const Tensor& g, Tape::GradSink& s) {
                          s.add(a.id, g);
                          s.add(b.id, g);
                        });
}

inline Var sub(Var a, Var b) {
  return a.tape->record(kernels::sub(a.value(), b.value()), {a, b},
                        [a, b](const Tensor& g, Tape::GradSink& s) {
                          s.add(a.id, g);
                          if (s.wants(b.id)) s.add(b.id, kernels::neg(g));
                        });
}

inline Var mul(Var a, Var b) {
  return a.tape->record(kernels::mul(a.value(), b.value()), {a, b},
                        [a, b](const Tensor& g, Tape::GradSink& s) {
                          if (s.wants(a.id)) s.add(a.id, kernels::mul(g, s.value(b.id)));
                          if (s.wants(b.id)) s.add(b.id, kernels::mul(g, s.value(a.id)));
                        });
}

inline Var neg(Var a) {
  return a.tape->record(kernels::neg(a.value()), {a}, [a](const Tensor& g, Tape::GradSink& s) {
    s.add(a.id, kernels::neg(g));
  });
}

inline Var scale(Var a, double c) {
  return a.tape->record(kernels::scale(a.value(), c), {a}, [a, c](const Tensor& g, Tape::GradSink& s) {
    s.add(a.id, kernels::scale(g, c));
  });
}

inline Var add_scalar(Var a, double c) {
  return a.tape->record(kernels::add_scalar(a.value(), c), {a},
                        [a](const Tensor& g, Tape::GradSink& s) { s.add(a.id, g); });
}

inline Var matmul(Var a, Var b) {
  return a.tape->record(kernels::matmul(a.value(), b.value()), {a, b},
                        [a, b](const Tensor& g, Tape::GradSink& s) {
                          if (s.wants(a.id)) s.add(a.id, kernels::matmul_nt(g, s.value(b.id)));
                          if (s.wants(b.id)) s.add(b.id, kernels::matmul_tn(s.value(a.id), g));
                        });
}

namespace detail {

// Elementwise unary primitive whose derivative is a function of (x, y).
template <class Deriv>
Var unary(Var a, Tensor out, Deriv deriv) {
  return a.tape->record(std::move(out), {a}, [a, deriv](const Tensor& g, Tape::GradSink& s) {
    const Tensor& x = s.value(a.id);
    const Tensor& y = s.output();
    Tensor d(g.shape());
    auto gd = g.data();
    auto xd = x.data();
    auto yd = y.data();
    auto dd = d.data();
    for (std::size_t i = 0; i < dd.size(); ++i) dd[i] = gd[i] * deriv(xd[i], yd[i]);
    s.add(a.id, std::move(d));
  });
}

}  // namespace detail

inline Var tanh(Var a) {
  return detail::unary(a, kernels::tanh(a.value()), [](double, double y) { return 1.0 - y * y; });
}
inline Var sigmoid(Var a) {
  return detail::unary(a, kernels::sigmoid(a.value()), [](double, double y) { return y * (1.0 - y); });
}
inline Var exp(Var a) {
  return detail::unary(a, kernels::exp(a.value()), [](double, double y) { return y; });
}
inline Var expm1(Var a) {
  return detail::unary(a, kernels::expm1(a.value()), [](double, double y) { return y + 1.0; });
}
inline Var log(Var a) {
  return detail::unary(a, kernels::log(a.value()), [](double x, double) { return 1.0 / x; });
}
inline Var softplus(Var a) {
  return detail::unary(a, kernels::softplus(a.value()),
                       [](double x, double) { return kernels::sigmoid_scalar(x); });
}
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(a, kernels::clamp(a.value(), lo, hi),
                       [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Var sum(Var a, std::size_t axis) {
  return a.tape->record(kernels::sum(a.value(), axis), {a}, [a, axis](const Tensor& g, Tape::GradSink& s) {
    const Tensor& x = s.value(a.id);
    Tensor d(x.shape());
    if (x.rank() == 1) {
      std::fill(d.data().begin(), d.data().end(), g[0]);
    } else if (axis == 0) {
      for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j) d.at(i, j) = g[j];
    } else {
      for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j) d.at(i, j) = g[i];
    }
    s.add(a.id, std::move(d));
  });
}

inline Var mean(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const std::size_t n = x.rank() == 1 ? x.size() : x.dim(axis > 1 ? 0 : axis);
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

inline Var sum_all(Var a) {
  return a.tape->record(kernels::sum_all(a.value()), {a}, [a](const Tensor& g, Tape::GradSink& s) {
    s.add(a.id, Tensor(s.value(a.id).shape(), g[0]));
  });
}

inline Var concat(Var a, Var b) {
  const std::size_t ca = a.value().cols();
  const std::size_t cb = b.value().cols();
  return a.tape->record(kernels::concat(a.value(), b.value()), {a, b},
                        [a, b, ca, cb](const Tensor& g, Tape::GradSink& s) {
                          if (s.wants(a.id)) s.add(a.id, kernels::slice_cols(g, 0, ca));
                          if (s.wants(b.id)) s.add(b.id, kernels::slice_cols(g, ca, ca + cb));
                        });
}

inline Var add_rowvec(Var a, Var v) {
  return a.tape->record(kernels::add_rowvec(a.value(), v.value()), {a, v},
                        [a, v](const Tensor& g, Tape::GradSink& s) {
                          s.add(a.id, g);
                          if (s.wants(v.id)) s.add(v.id, kernels::sum(g, 0));
                        });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  return a.tape->record(kernels::slice_rows(a.value(), begin, end), {a},
                        [a, begin](const Tensor& g, Tape::GradSink& s) {
                          const Tensor& x = s.value(a.id);
                          Tensor d(x.shape());
                          const std::size_t stride = x.rank() == 1 ? 1 : x.dim(1);
                          std::copy(g.data().begin(), g.data().end(), d.data().begin() + begin * stride);
                          s.add(a.id, std::move(d));
                        });
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  return a.tape->record(kernels::slice_cols(a.value(), begin, end), {a},
                        [a, begin](const Tensor& g, Tape::GradSink& s) {
                          const Tensor& x = s.value(a.id);
                          Tensor d(x.shape());
                          const std::size_t c = x.cols(), w = g.cols();
                          for (std::size_t i = 0; i < x.rows(); ++i)
                            std::copy_n(g.data().begin() + i * w, w, d.data().begin() + i * c + begin);
                          s.add(a.id, std::move(d));
                        });
}

inline Var reshape(Var a, Shape shape) {
  return a.tape->record(a.value().reshaped(std::move(shape)), {a}, [a](const Tensor& g, Tape::GradSink& s) {
    s.add(a.id, g.reshaped(s.value(a.id).shape()));
  });
}

// ---------------------------------------------------------------------------
// Gradient verification.

// Max over all coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must be callable with both `const std::vector<Tensor>&` and
// `const std::vector<Var>&` and return a one-element result.
template <class F>
double finite_difference_check(F&& f, const std::vector<Tensor>& xs, double h) {
  if (!(h > 0.0)) throw ContractError("finite_difference_check requires h > 0");
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(xs.size());
  for (const Tensor& x : xs) vars.push_back(tape.variable(x));
  Var out = f(vars);
  Gradients grads = tape.backward(out);

  auto eval = [&](const std::vector<Tensor>& at) {
    const double v = value_of(f(at)).item();
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite evaluation");
    return v;
  };

  double worst = 0.0;
  std::vector<Tensor> probe = xs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& analytic = grads.at(vars[k].id);
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k][i];
      probe[k][i] = orig + h;
      const double up = eval(probe);
      probe[k][i] = orig - h;
      const double down = eval(probe);
      probe[k][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

// Single-argument form: `f` takes a Tensor or a Var.
template <class F>
double finite_difference_check(F&& f, const Tensor& x, double h) {
  auto wrapped = [&f](const auto& xs) { return f(xs[0]); };
  return finite_difference_check(wrapped, std::vector<Tensor>{x}, h);
}

}  // namespace vrnd
