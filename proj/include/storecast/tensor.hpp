#pragma once

// Dense row-major float64 tensors with a tape-based reverse-mode autodiff.
//
// A Tape records every primitive executed through it. Parameters are bound by
// reference; backward() accumulates d(loss)/d(param) into each parameter's
// grad buffer. Constants and views never receive gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "storecast/error.hpp"

namespace storecast::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ')';
  return out.str();
}

[[noreturn]] inline void shape_mismatch(const std::string& op, const Shape& expected, const Shape& got) {
  fail(ErrorKind::ShapeMismatch, op + ": expected " + to_string(expected) + ", got " + to_string(got));
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_)) {
      fail(ErrorKind::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                         ad::to_string(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const {
    if (data_.size() != 1) shape_mismatch("item", Shape{}, shape_);
    return data_[0];
  }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on = true) {
    requires_grad_ = on;
    return *this;
  }

  bool has_grad() const { return !grad_.empty() || data_.empty(); }
  std::span<const double> grad() const { return grad_; }
  std::span<double> grad() { return grad_; }
  void zero_grad() { grad_.assign(data_.size(), 0.0); }
  void clear_grad() { grad_.clear(); }
  void accumulate_grad(std::span<const double> g) {
    if (grad_.empty()) grad_.assign(data_.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
  }

  /// Same values, new shape with equal element count.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class BackwardContext;

class Tape {
 public:
  using BackwardFn = std::function<void(BackwardContext&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Bind a parameter by reference. It must outlive the tape.
  Var parameter(Tensor& p) {
    Node n;
    n.ref = &p;
    n.leaf = &p;
    n.requires_grad = p.requires_grad();
    return push(std::move(n));
  }

  /// Constant owned by the tape.
  Var constant(Tensor t) {
    Node n;
    n.owned = std::move(t);
    n.owns = true;
    return push(std::move(n));
  }

  /// Constant referenced without copying. It must outlive the tape.
  Var view(const Tensor& t) {
    Node n;
    n.ref = &t;
    return push(std::move(n));
  }

  const Tensor& value(Var v) const { return node(v).get(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Record an operation output. The backward function is kept only when an
  /// input requires a gradient.
  Var record(Tensor out, std::initializer_list<Var> inputs, BackwardFn fn) {
    Node n;
    n.owned = std::move(out);
    n.owns = true;
    for (const Var& v : inputs) {
      check_owner(v);
      n.inputs.push_back(v.id);
      n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    return push(std::move(n));
  }

  /// Reverse sweep from a scalar loss. Parameter grads accumulate across calls.
  void backward(Var loss);

 private:
  friend class BackwardContext;
  friend struct Var;

  struct Node {
    Tensor owned;
    bool owns = false;
    const Tensor* ref = nullptr;
    Tensor* leaf = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;

    const Tensor& get() const { return owns ? owned : *ref; }
  };

  void check_owner(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) fail(ErrorKind::ShapeMismatch, "variable belongs to another tape");
  }
  const Node& node(Var v) const {
    check_owner(v);
    return nodes_[v.id];
  }
  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

class BackwardContext {
 public:
  BackwardContext(Tape& tape, std::size_t id) : tape_(tape), id_(id) {}

  std::span<const double> grad_out() const { return tape_.grads_[id_]; }
  const Tensor& output() const { return tape_.nodes_[id_].get(); }
  const Tensor& input(std::size_t k) const { return tape_.nodes_[input_id(k)].get(); }
  bool needs(std::size_t k) const { return tape_.nodes_[input_id(k)].requires_grad; }

  /// Gradient buffer of input k, zero-initialised on first use.
  std::span<double> grad_in(std::size_t k) {
    auto& g = tape_.grads_[input_id(k)];
    if (g.empty()) g.assign(input(k).size(), 0.0);
    return g;
  }

 private:
  std::size_t input_id(std::size_t k) const { return tape_.nodes_[id_].inputs.at(k); }
  Tape& tape_;
  std::size_t id_;
};

inline void Tape::backward(Var loss) {
  check_owner(loss);
  if (value(loss).size() != 1) {
    fail(ErrorKind::NonScalarLoss, "loss has shape " + ad::to_string(value(loss).shape()));
  }
  grads_.assign(nodes_.size(), {});
  grads_[loss.id].assign(1, 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (grads_[i].empty() || !n.requires_grad) continue;
    if (n.backward) {
      BackwardContext ctx(*this, i);
      n.backward(ctx);
    } else if (n.leaf != nullptr) {
      n.leaf->accumulate_grad(grads_[i]);
    }
  }
  grads_.clear();
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

namespace detail {
inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) fail(ErrorKind::ShapeMismatch, "operands recorded on different tapes");
  return *a.tape;
}
inline void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    fail(ErrorKind::ShapeMismatch, op + ": expected rank " + std::to_string(rank) + ", got shape " +
                                       ad::to_string(t.shape()));
  }
}
}  // namespace detail

/// (m, k) x (k, n) -> (m, n)
inline Var matmul(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require_rank("matmul", A, 2);
  detail::require_rank("matmul", B, 2);
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) shape_mismatch("matmul rhs", Shape{k, n}, B.shape());
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const RowMatrix>;
  using Map = Eigen::Map<RowMatrix>;
  const auto em = static_cast<Eigen::Index>(m), ek = static_cast<Eigen::Index>(k), en = static_cast<Eigen::Index>(n);
  Tensor out(Shape{m, n});
  Map(out.data().data(), em, en).noalias() = ConstMap(A.data().data(), em, ek) * ConstMap(B.data().data(), ek, en);
  return tape.record(std::move(out), {a, b}, [em, ek, en](BackwardContext& ctx) {
    const ConstMap g(ctx.grad_out().data(), em, en);
    if (ctx.needs(0)) {
      Map(ctx.grad_in(0).data(), em, ek).noalias() += g * ConstMap(ctx.input(1).data().data(), ek, en).transpose();
    }
    if (ctx.needs(1)) {
      Map(ctx.grad_in(1).data(), ek, en).noalias() += ConstMap(ctx.input(0).data().data(), em, ek).transpose() * g;
    }
  });
}

inline Var transpose(Var a) {
  const Tensor& A = a.value();
  detail::require_rank("transpose", A, 2);
  const std::size_t m = A.dim(0), n = A.dim(1);
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return a.tape->record(std::move(out), {a}, [m, n](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto ga = ctx.grad_in(0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

inline Var add(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_mismatch("add", A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
  return tape.record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.needs(k)) continue;
      auto gi = ctx.grad_in(k);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

/// Elementwise product of equal-shape tensors.
inline Var mul(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_mismatch("mul", A.shape(), B.shape());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
  return tape.record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    if (ctx.needs(0)) {
      auto ga = ctx.grad_in(0);
      const Tensor& B = ctx.input(1);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (ctx.needs(1)) {
      auto gb = ctx.grad_in(1);
      const Tensor& A = ctx.input(0);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

inline Var mul_scalar(Var a, double c) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = c * A[i];
  return a.tape->record(std::move(out), {a}, [c](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto ga = ctx.grad_in(0);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

inline Var relu(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
  return a.tape->record(std::move(out), {a}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const Tensor& A = ctx.input(0);
    auto ga = ctx.grad_in(0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (A[i] > 0.0) ga[i] += g[i];
  });
}

/// Softmax along the last axis of a matrix; each row sums to one.
inline Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  detail::require_rank("softmax_rows", A, 2);
  const std::size_t m = A.dim(0), n = A.dim(1);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &A.data()[i * n];
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return a.tape->record(std::move(out), {a}, [m, n](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const Tensor& Y = ctx.output();
    auto ga = ctx.grad_in(0);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += Y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

/// Dilated 1-D convolution over the last axis of x: (B, Cin, S, L) with
/// kernel (Cout, Cin, K) and optional bias (Cout). The input is padded with
/// `left_pad` zeros on the left and none on the right, so the output length is
/// L + left_pad - (K - 1) * dilation. With left_pad = (K - 1) * dilation the
/// convolution is causal and length-preserving.
inline Var conv1d_dilated(Var x, Var kernel, std::optional<Var> bias, std::size_t dilation, std::size_t left_pad) {
  Tape& tape = detail::same_tape(x, kernel);
  const Tensor& X = x.value();
  const Tensor& W = kernel.value();
  detail::require_rank("conv1d_dilated input", X, 4);
  detail::require_rank("conv1d_dilated kernel", W, 3);
  if (dilation < 1) fail(ErrorKind::ShapeMismatch, "conv1d_dilated: dilation must be >= 1");
  const std::size_t B = X.dim(0), Cin = X.dim(1), S = X.dim(2), L = X.dim(3);
  const std::size_t Cout = W.dim(0), K = W.dim(2);
  if (W.dim(1) != Cin) shape_mismatch("conv1d_dilated kernel", Shape{Cout, Cin, K}, W.shape());
  const long span = static_cast<long>((K - 1) * dilation);
  const long Lout_signed = static_cast<long>(L + left_pad) - span;
  if (Lout_signed < 1) fail(ErrorKind::ShapeMismatch, "conv1d_dilated: receptive field exceeds padded input");
  const auto Lout = static_cast<std::size_t>(Lout_signed);
  if (bias) {
    detail::same_tape(x, *bias);
    if (bias->shape() != Shape{Cout}) shape_mismatch("conv1d_dilated bias", Shape{Cout}, bias->shape());
  }

  // Column buffer for batch element b: row (c, k), column (s, t) holds the
  // input tap x[b, c, s, t + k * dilation - left_pad], or zero in the padding.
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t cols = S * Lout;
  auto im2col = [=](const double* xd, std::size_t b, RowMatrix& col) {
    col.setZero(static_cast<Eigen::Index>(Cin * K), static_cast<Eigen::Index>(cols));
    for (std::size_t c = 0; c < Cin; ++c)
      for (std::size_t k = 0; k < K; ++k) {
        const long off = static_cast<long>(k * dilation) - static_cast<long>(left_pad);
        const std::size_t t0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
        const long t1 = std::min<long>(static_cast<long>(Lout), static_cast<long>(L) - off);
        if (t1 <= static_cast<long>(t0)) continue;
        double* row = col.data() + (c * K + k) * cols;
        for (std::size_t s = 0; s < S; ++s) {
          const double* src = xd + ((b * Cin + c) * S + s) * L;
          for (auto t = static_cast<long>(t0); t < t1; ++t) row[s * Lout + static_cast<std::size_t>(t)] = src[t + off];
        }
      }
  };
  auto col2im = [=](const RowMatrix& col, std::size_t b, double* gx) {
    for (std::size_t c = 0; c < Cin; ++c)
      for (std::size_t k = 0; k < K; ++k) {
        const long off = static_cast<long>(k * dilation) - static_cast<long>(left_pad);
        const std::size_t t0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
        const long t1 = std::min<long>(static_cast<long>(Lout), static_cast<long>(L) - off);
        if (t1 <= static_cast<long>(t0)) continue;
        const double* row = col.data() + (c * K + k) * cols;
        for (std::size_t s = 0; s < S; ++s) {
          double* dst = gx + ((b * Cin + c) * S + s) * L;
          for (auto t = static_cast<long>(t0); t < t1; ++t) dst[t + off] += row[s * Lout + static_cast<std::size_t>(t)];
        }
      }
  };
  using ConstMap = Eigen::Map<const RowMatrix>;
  using Map = Eigen::Map<RowMatrix>;
  const auto rows_w = static_cast<Eigen::Index>(Cout), inner = static_cast<Eigen::Index>(Cin * K);
  const auto ecols = static_cast<Eigen::Index>(cols);

  Tensor out(Shape{B, Cout, S, Lout});
  {
    const ConstMap w(W.data().data(), rows_w, inner);
    RowMatrix col;
    for (std::size_t b = 0; b < B; ++b) {
      im2col(X.data().data(), b, col);
      Map o(out.data().data() + b * Cout * cols, rows_w, ecols);
      o.noalias() = w * col;
      if (bias) o.colwise() += Eigen::Map<const Eigen::VectorXd>(bias->value().data().data(), rows_w);
    }
  }

  auto backward = [=](BackwardContext& ctx) {
    const double* g = ctx.grad_out().data();
    const double* xd = ctx.input(0).data().data();
    const ConstMap w(ctx.input(1).data().data(), rows_w, inner);
    RowMatrix col, gcol;
    for (std::size_t b = 0; b < B; ++b) {
      const ConstMap gb(g + b * Cout * cols, rows_w, ecols);
      if (ctx.needs(0)) {
        gcol.noalias() = w.transpose() * gb;
        col2im(gcol, b, ctx.grad_in(0).data());
      }
      if (ctx.needs(1)) {
        im2col(xd, b, col);
        Map gw(ctx.grad_in(1).data(), rows_w, inner);
        gw.noalias() += gb * col.transpose();
      }
      if (bias && ctx.needs(2)) {
        Eigen::Map<Eigen::VectorXd> gbias(ctx.grad_in(2).data(), rows_w);
        gbias += gb.rowwise().sum();
      }
    }
  };
  if (bias) return tape.record(std::move(out), {x, kernel, *bias}, backward);
  return tape.record(std::move(out), {x, kernel}, backward);
}

/// Pointwise channel mixing: x (B, Cin, S, L), w (Cout, Cin), optional bias (Cout).
inline Var conv1x1(Var x, Var w, std::optional<Var> bias) {
  const Tensor& W = w.value();
  detail::require_rank("conv1x1 weight", W, 2);
  Var kernel = x.tape->record(W.reshaped(Shape{W.dim(0), W.dim(1), 1}), {w}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto gw = ctx.grad_in(0);
    for (std::size_t i = 0; i < g.size(); ++i) gw[i] += g[i];
  });
  return conv1d_dilated(x, kernel, bias, 1, 0);
}

/// Final time step of (B, C, S, L), transposed to (B, S, C).
inline Var last_step(Var x) {
  const Tensor& X = x.value();
  detail::require_rank("last_step", X, 4);
  const std::size_t B = X.dim(0), C = X.dim(1), S = X.dim(2), L = X.dim(3);
  Tensor out(Shape{B, S, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < S; ++s) out[(b * S + s) * C + c] = X[((b * C + c) * S + s) * L + L - 1];
  return x.tape->record(std::move(out), {x}, [B, C, S, L](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto gx = ctx.grad_in(0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < S; ++s) gx[((b * C + c) * S + s) * L + L - 1] += g[(b * S + s) * C + c];
  });
}

/// Last n time steps of (B, C, S, L) -> (B, C, S, n).
inline Var last_steps(Var x, std::size_t n) {
  const Tensor& X = x.value();
  detail::require_rank("last_steps", X, 4);
  const std::size_t B = X.dim(0), C = X.dim(1), S = X.dim(2), L = X.dim(3);
  if (n < 1 || n > L) fail(ErrorKind::ShapeMismatch, "last_steps: cannot keep " + std::to_string(n) + " of " + std::to_string(L));
  const std::size_t rows = B * C * S;
  Tensor out(Shape{B, C, S, n});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < n; ++t) out[r * n + t] = X[r * L + L - n + t];
  return x.tape->record(std::move(out), {x}, [rows, L, n](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto gx = ctx.grad_in(0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t t = 0; t < n; ++t) gx[r * L + L - n + t] += g[r * n + t];
  });
}

/// Batched left multiplication by a shared matrix: A (S, S), H (B, S, C) -> A H per batch.
inline Var graph_aggregate(Var adjacency, Var h) {
  Tape& tape = detail::same_tape(adjacency, h);
  const Tensor& A = adjacency.value();
  const Tensor& H = h.value();
  detail::require_rank("graph_aggregate adjacency", A, 2);
  detail::require_rank("graph_aggregate features", H, 3);
  const std::size_t B = H.dim(0), S = H.dim(1), C = H.dim(2);
  if (A.dim(0) != S || A.dim(1) != S) shape_mismatch("graph_aggregate adjacency", Shape{S, S}, A.shape());
  Tensor out(H.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        const double a = A[i * S + j];
        const double* src = &H.data()[(b * S + j) * C];
        double* dst = &out.data()[(b * S + i) * C];
        for (std::size_t c = 0; c < C; ++c) dst[c] += a * src[c];
      }
  return tape.record(std::move(out), {adjacency, h}, [B, S, C](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const Tensor& A = ctx.input(0);
    const Tensor& H = ctx.input(1);
    if (ctx.needs(0)) {
      auto ga = ctx.grad_in(0);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < S; ++i)
          for (std::size_t j = 0; j < S; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) s += g[(b * S + i) * C + c] * H[(b * S + j) * C + c];
            ga[i * S + j] += s;
          }
    }
    if (ctx.needs(1)) {
      auto gh = ctx.grad_in(1);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < S; ++i)
          for (std::size_t j = 0; j < S; ++j) {
            const double a = A[i * S + j];
            for (std::size_t c = 0; c < C; ++c) gh[(b * S + j) * C + c] += a * g[(b * S + i) * C + c];
          }
    }
  });
}

inline Var reshape(Var x, Shape shape) {
  const Tensor& X = x.value();
  if (numel(shape) != X.size()) shape_mismatch("reshape", shape, X.shape());
  return x.tape->record(X.reshaped(std::move(shape)), {x}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto gx = ctx.grad_in(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// x (M, K) plus b (K) broadcast over rows.
inline Var add_row_bias(Var x, Var b) {
  Tape& tape = detail::same_tape(x, b);
  const Tensor& X = x.value();
  const Tensor& Bv = b.value();
  detail::require_rank("add_row_bias", X, 2);
  const std::size_t m = X.dim(0), k = X.dim(1);
  if (Bv.shape() != Shape{k}) shape_mismatch("add_row_bias bias", Shape{k}, Bv.shape());
  Tensor out(X.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = X[i * k + j] + Bv[j];
  return tape.record(std::move(out), {x, b}, [m, k](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    if (ctx.needs(0)) {
      auto gx = ctx.grad_in(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (ctx.needs(1)) {
      auto gb = ctx.grad_in(1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) gb[j] += g[i * k + j];
    }
  });
}

inline Var sum_all(Var a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double v : A.data()) s += v;
  return a.tape->record(Tensor::scalar(s), {a}, [](BackwardContext& ctx) {
    const double g = ctx.grad_out()[0];
    for (auto& v : ctx.grad_in(0)) v += g;
  });
}

inline Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return mul_scalar(sum_all(a), 1.0 / n);
}

/// Mean Huber-style loss: 0.5 d^2 / beta where |d| < beta, else |d| - 0.5 beta.
inline Var smooth_l1(Var pred, Var target, double beta = 1.0) {
  Tape& tape = detail::same_tape(pred, target);
  const Tensor& P = pred.value();
  const Tensor& T = target.value();
  if (P.shape() != T.shape()) shape_mismatch("smooth_l1", P.shape(), T.shape());
  if (!(beta > 0.0)) fail(ErrorKind::DomainError, "smooth_l1: beta must be positive");
  const double n = static_cast<double>(P.size());
  double s = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double d = P[i] - T[i];
    const double ad = std::abs(d);
    s += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
  }
  return tape.record(Tensor::scalar(s / n), {pred, target}, [beta, n](BackwardContext& ctx) {
    const double g = ctx.grad_out()[0] / n;
    const Tensor& P = ctx.input(0);
    const Tensor& T = ctx.input(1);
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.needs(k)) continue;
      auto gi = ctx.grad_in(k);
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < P.size(); ++i) {
        const double d = P[i] - T[i];
        const double dd = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
        gi[i] += sign * g * dd;
      }
    }
  });
}

}  // namespace storecast::ad
