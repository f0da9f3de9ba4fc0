// Copyright 2026 The LPM Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records nodes in evaluation order. Each node owns its value and a
// closure that pushes the node's upstream gradient into its inputs, so a
// single reverse sweep over the node list is a valid topological traversal.
// Only the operations used by the part-aware autoencoder, its generative
// heads and their losses are provided.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lpm/tensor.hpp"

namespace lpm::ad {

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<T>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix<T>&)>;

  Tape() = default;
  /// With record_gradients = false parameters enter as constants and no
  /// backward closures are kept (inference).
  explicit Tape(bool record_gradients) : record_gradients_(record_gradients) {}

  Var constant(Matrix<T> value) { return push(std::move(value), false, nullptr, {}); }

  /// Parameters are referenced, not copied; the tape must not outlive them.
  Var parameter(Parameter<T>& p) {
    Node n;
    n.external = &p.value;
    n.param = record_gradients_ ? &p : nullptr;
    n.requires_grad = record_gradients_;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var record(Matrix<T> value, bool requires_grad, BackwardFn fn) {
    return push(std::move(value), requires_grad, nullptr, std::move(fn));
  }

  const Matrix<T>& value(Var v) const {
    check(v);
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(Var v) const {
    check(v);
    return nodes_[v.id].requires_grad;
  }

  /// Gradient buffer of v, allocated as zeros on first use.
  Matrix<T>& grad(Var v) {
    check(v);
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      const Matrix<T>& val = value(v);
      n.grad.setZero(val.rows(), val.cols());
    }
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 loss. Parameter gradients are accumulated
  /// into Parameter::grad. A tape can be swept once.
  void backward(Var loss, T seed = T(1)) {
    if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
      throw TapeStateError("backward called before any forward computation was recorded");
    }
    if (swept_) throw TapeStateError("backward already ran on this tape");
    const Matrix<T>& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw TapeStateError("backward requires a scalar loss, got " + shape_str(lv.rows(), lv.cols()));
    }
    swept_ = true;
    grad(loss)(0, 0) += seed;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.param != nullptr) {
        if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
          n.param->grad.setZero(n.grad.rows(), n.grad.cols());
        }
        n.param->grad += n.grad;
      } else if (n.backward) {
        n.backward(*this, n.grad);
      }
      // Release activations' gradients as soon as they have been consumed.
      if (n.param == nullptr) n.grad.resize(0, 0);
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    const Matrix<T>* external = nullptr;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Matrix<T> value, bool requires_grad, Parameter<T>* param, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.param = param;
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  void check(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw TapeStateError("variable does not belong to this tape");
  }

  // deque keeps value references stable while new nodes are appended.
  std::deque<Node> nodes_;
  bool swept_ = false;
  bool record_gradients_ = true;
};

namespace detail {

inline void require_same_shape(Index r1, Index c1, Index r2, Index c2, const char* op) {
  if (r1 != r2 || c1 != c2) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(r1, c1) + " vs " + shape_str(r2, c2));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + shape_str(av.rows(), av.cols()) + " * " + shape_str(bv.rows(), bv.cols()));
  }
  Matrix<T> out;
  out.noalias() = av * bv;
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.grad(a).noalias() += g * tp.value(b).transpose();
    if (tp.requires_grad(b)) tp.grad(b).noalias() += tp.value(a).transpose() * g;
  });
}

/// a * b^T.
template <typename T>
Var matmul_bt(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_bt: " + shape_str(av.rows(), av.cols()) + " * (" +
                     shape_str(bv.rows(), bv.cols()) + ")^T");
  }
  Matrix<T> out;
  out.noalias() = av * bv.transpose();
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.grad(a).noalias() += g * tp.value(b);
    if (tp.requires_grad(b)) tp.grad(b).noalias() += g.transpose() * tp.value(a);
  });
}

namespace detail {

/// Register tile of `R` rows by `C` columns: acc = fma chain over k seeded
/// with the bias. The full-tile path has no bounds checks.
template <typename T, int R, int C>
inline void affine_tile_full(const T* x, Index depth, const T* w, Index ldw, const T* b, T* out, Index ldo) {
  T acc[R][C];
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) acc[i][j] = b[j];
  for (Index k = 0; k < depth; ++k) {
    const T* wr = w + k * ldw;
    for (int i = 0; i < R; ++i) {
      const T a = x[i * depth + k];
      for (int j = 0; j < C; ++j) acc[i][j] = std::fma(a, wr[j], acc[i][j]);
    }
  }
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) out[i * ldo + j] = acc[i][j];
}

template <typename T>
inline void affine_tile_edge(const T* x, Index depth, const T* w, Index ldw, const T* b, T* out, Index ldo, Index rows,
                             Index cols) {
  for (Index i = 0; i < rows; ++i) {
    T* o = out + i * ldo;
    for (Index j = 0; j < cols; ++j) o[j] = b[j];
    for (Index k = 0; k < depth; ++k) {
      const T a = x[i * depth + k];
      const T* wr = w + k * ldw;
      for (Index j = 0; j < cols; ++j) o[j] = std::fma(a, wr[j], o[j]);
    }
  }
}

/// out(r, c) = fma chain of x(r, k) * W(k, c) over k, seeded with b(c). Every
/// row goes through the same arithmetic regardless of its position, so
/// results do not depend on row order or batch composition.
template <typename T>
void affine_rows(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b, Matrix<T>& out) {
  constexpr int kRows = 8;
  constexpr int kCols = 64 / static_cast<int>(sizeof(T)) * 2;
  const Index rows = x.rows();
  const Index depth = x.cols();
  const Index cols = w.cols();
  out.resize(rows, cols);
  for (Index r0 = 0; r0 < rows; r0 += kRows) {
    const Index nr = std::min<Index>(kRows, rows - r0);
    for (Index c0 = 0; c0 < cols; c0 += kCols) {
      const Index nc = std::min<Index>(kCols, cols - c0);
      if (nr == kRows && nc == kCols) {
        affine_tile_full<T, kRows, kCols>(x.data() + r0 * depth, depth, w.data() + c0, cols, b.data() + c0,
                                          out.data() + r0 * cols + c0, cols);
      } else {
        affine_tile_edge<T>(x.data() + r0 * depth, depth, w.data() + c0, cols, b.data() + c0,
                            out.data() + r0 * cols + c0, cols, nr, nc);
      }
    }
  }
}

}  // namespace detail

/// x * W + b with b broadcast over rows.
template <typename T>
Var affine(Tape<T>& t, Var x, Var w, Var b) {
  const auto& xv = t.value(x);
  const auto& wv = t.value(w);
  const auto& bv = t.value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ShapeError("affine: x " + shape_str(xv.rows(), xv.cols()) + ", W " + shape_str(wv.rows(), wv.cols()) +
                     ", b " + shape_str(bv.rows(), bv.cols()));
  }
  Matrix<T> out;
  detail::affine_rows(xv, wv, bv, out);
  const bool rg = t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(b);
  return t.record(std::move(out), rg, [x, w, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(x)) tp.grad(x).noalias() += g * tp.value(w).transpose();
    if (tp.requires_grad(w)) tp.grad(w).noalias() += tp.value(x).transpose() * g;
    if (tp.requires_grad(b)) tp.grad(b) += g.colwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Matrix<T> out = t.value(x).cwiseMax(T(0));
  return t.record(std::move(out), t.requires_grad(x), [x](Tape<T>& tp, const Matrix<T>& g) {
    auto& gx = tp.grad(x);
    const T* xv = tp.value(x).data();
    const T* gv = g.data();
    T* out = gx.data();
    for (Index i = 0, n = gx.size(); i < n; ++i) out[i] += xv[i] > T(0) ? gv[i] : T(0);
  });
}

template <typename T>
Var leaky_relu(Tape<T>& t, Var x, T slope) {
  const auto& xv = t.value(x);
  Matrix<T> out = (xv.array() > T(0)).select(xv, xv * slope);
  return t.record(std::move(out), t.requires_grad(x), [x, slope](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x) += (tp.value(x).array() > T(0)).select(g, g * slope).matrix();
  });
}

/// Elementwise product with a constant matrix of the same shape.
template <typename T>
Var mul_const(Tape<T>& t, Var x, Matrix<T> c) {
  const auto& xv = t.value(x);
  detail::require_same_shape(xv.rows(), xv.cols(), c.rows(), c.cols(), "mul_const");
  Matrix<T> out = xv.cwiseProduct(c);
  return t.record(std::move(out), t.requires_grad(x), [x, c = std::move(c)](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x) += g.cwiseProduct(c);
  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  detail::require_same_shape(av.rows(), av.cols(), bv.rows(), bv.cols(), "add");
  Matrix<T> out = av + bv;
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.grad(a) += g;
    if (tp.requires_grad(b)) tp.grad(b) += g;
  });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  detail::require_same_shape(av.rows(), av.cols(), bv.rows(), bv.cols(), "sub");
  Matrix<T> out = av - bv;
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.grad(a) += g;
    if (tp.requires_grad(b)) tp.grad(b) -= g;
  });
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  detail::require_same_shape(av.rows(), av.cols(), bv.rows(), bv.cols(), "mul");
  Matrix<T> out = av.cwiseProduct(bv);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.grad(a) += g.cwiseProduct(tp.value(b));
    if (tp.requires_grad(b)) tp.grad(b) += g.cwiseProduct(tp.value(a));
  });
}

template <typename T>
Var scale(Tape<T>& t, Var x, T c) {
  Matrix<T> out = t.value(x) * c;
  return t.record(std::move(out), t.requires_grad(x), [x, c](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x) += g * c;
  });
}

template <typename T>
Var add_scalar(Tape<T>& t, Var x, T c) {
  Matrix<T> out = t.value(x).array() + c;
  return t.record(std::move(out), t.requires_grad(x), [x](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x) += g;
  });
}

template <typename T>
Var exp(Tape<T>& t, Var x) {
  Matrix<T> out = t.value(x).array().exp();
  return t.record(out, t.requires_grad(x), [x, y = out](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x) += g.cwiseProduct(y);
  });
}

template <typename T>
Var square(Tape<T>& t, Var x) {
  Matrix<T> out = t.value(x).array().square();
  return t.record(std::move(out), t.requires_grad(x), [x](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x) += (g.array() * tp.value(x).array() * T(2)).matrix();
  });
}

/// log(1 + exp(x)), evaluated stably.
template <typename T>
Var softplus(Tape<T>& t, Var x) {
  const auto& xv = t.value(x);
  Matrix<T> out = xv.unaryExpr([](T v) { return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); });
  return t.record(std::move(out), t.requires_grad(x), [x](Tape<T>& tp, const Matrix<T>& g) {
    const Matrix<T> sig = tp.value(x).unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
    tp.grad(x) += g.cwiseProduct(sig);
  });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <typename T>
Var sum(Tape<T>& t, Var x) {
  Matrix<T> out(1, 1);
  out(0, 0) = t.value(x).sum();
  return t.record(std::move(out), t.requires_grad(x), [x](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x).array() += g(0, 0);
  });
}

template <typename T>
Var mean(Tape<T>& t, Var x) {
  const auto& xv = t.value(x);
  if (xv.size() == 0) throw EmptyInputError("mean of an empty matrix");
  const T inv = T(1) / static_cast<T>(xv.size());
  Matrix<T> out(1, 1);
  out(0, 0) = xv.sum() * inv;
  return t.record(std::move(out), t.requires_grad(x), [x, inv](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x).array() += g(0, 0) * inv;
  });
}

/// Euclidean norm of each row; r x c -> r x 1.
template <typename T>
Var row_norm(Tape<T>& t, Var x) {
  Matrix<T> out = t.value(x).rowwise().norm();
  return t.record(out, t.requires_grad(x), [x, norms = out](Tape<T>& tp, const Matrix<T>& g) {
    const auto& xv = tp.value(x);
    auto& gx = tp.grad(x);
    for (Index r = 0; r < xv.rows(); ++r) {
      if (norms(r, 0) > T(0)) gx.row(r) += xv.row(r) * (g(r, 0) / norms(r, 0));
    }
  });
}

/// Same data reinterpreted with a new row-major shape.
template <typename T>
Var reshape(Tape<T>& t, Var x, Index rows, Index cols) {
  const auto& xv = t.value(x);
  if (rows * cols != xv.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(xv.rows(), xv.cols()) + " as " + shape_str(rows, cols));
  }
  Matrix<T> out = Eigen::Map<const Matrix<T>>(xv.data(), rows, cols);
  const Index r0 = xv.rows();
  const Index c0 = xv.cols();
  return t.record(std::move(out), t.requires_grad(x), [x, r0, c0](Tape<T>& tp, const Matrix<T>& g) {
    tp.grad(x) += Eigen::Map<const Matrix<T>>(g.data(), r0, c0);
  });
}

/// out.row(i) = x.row(index[i]); gradients scatter-add back.
template <typename T>
Var gather_rows(Tape<T>& t, Var x, std::vector<Index> index) {
  const auto& xv = t.value(x);
  Matrix<T> out(static_cast<Index>(index.size()), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= xv.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = xv.row(index[i]);
  }
  return t.record(std::move(out), t.requires_grad(x), [x, index = std::move(index)](Tape<T>& tp, const Matrix<T>& g) {
    auto& gx = tp.grad(x);
    for (std::size_t i = 0; i < index.size(); ++i) gx.row(index[i]) += g.row(static_cast<Index>(i));
  });
}

/// [a | b] along columns.
template <typename T>
Var concat_cols(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: row mismatch " + shape_str(av.rows(), av.cols()) + " | " +
                     shape_str(bv.rows(), bv.cols()));
  }
  Matrix<T> out(av.rows(), av.cols() + bv.cols());
  out.leftCols(av.cols()) = av;
  out.rightCols(bv.cols()) = bv;
  const Index ca = av.cols();
  const Index cb = bv.cols();
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b, ca, cb](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.grad(a) += g.leftCols(ca);
    if (tp.requires_grad(b)) tp.grad(b) += g.rightCols(cb);
  });
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-column statistics over the rows selected by `row_mask` (all rows
/// when empty). Every row is normalized with those statistics.
template <typename T>
struct BatchNormResult {
  Var out;
  RowVector<T> batch_mean;
  RowVector<T> batch_var;  // biased
  Index count = 0;
};

template <typename T>
BatchNormResult<T> batch_norm_train(Tape<T>& t, Var x, Var gamma, Var beta, const std::vector<char>& row_mask,
                                    T eps) {
  const auto& xv = t.value(x);
  const Index n = xv.rows();
  const Index c = xv.cols();
  if (!row_mask.empty() && static_cast<Index>(row_mask.size()) != n) {
    throw ShapeError("batch_norm: mask length " + std::to_string(row_mask.size()) + " != rows " + std::to_string(n));
  }
  const auto& gv = t.value(gamma);
  const auto& bv = t.value(beta);
  if (gv.rows() != 1 || gv.cols() != c || bv.rows() != 1 || bv.cols() != c) {
    throw ShapeError("batch_norm: gamma/beta must be 1x" + std::to_string(c));
  }
  BatchNormResult<T> res;
  res.batch_mean = RowVector<T>::Zero(c);
  res.batch_var = RowVector<T>::Zero(c);
  Index m = 0;
  for (Index r = 0; r < n; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    res.batch_mean += xv.row(r);
    ++m;
  }
  if (m == 0) throw EmptyInputError("batch_norm: no valid rows");
  res.batch_mean /= static_cast<T>(m);
  for (Index r = 0; r < n; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    res.batch_var += (xv.row(r) - res.batch_mean).array().square().matrix();
  }
  res.batch_var /= static_cast<T>(m);
  res.count = m;
  RowVector<T> inv_std = (res.batch_var.array() + eps).rsqrt().matrix();
  Matrix<T> xhat = (xv.rowwise() - res.batch_mean).array().rowwise() * inv_std.array();
  Matrix<T> out = (xhat.array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array();
  const bool rg = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
  res.out = t.record(std::move(out), rg,
                     [x, gamma, beta, xhat = std::move(xhat), inv_std, row_mask, m](Tape<T>& tp, const Matrix<T>& g) {
                       if (tp.requires_grad(gamma)) tp.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
                       if (tp.requires_grad(beta)) tp.grad(beta) += g.colwise().sum();
                       if (!tp.requires_grad(x)) return;
                       const RowVector<T> gam = tp.value(gamma).row(0);
                       Matrix<T> gh = g.array().rowwise() * gam.array();
                       const RowVector<T> sum_g = gh.colwise().sum();
                       const RowVector<T> sum_gx = gh.cwiseProduct(xhat).colwise().sum();
                       const T inv_m = T(1) / static_cast<T>(m);
                       auto& gx = tp.grad(x);
                       for (Index r = 0; r < gh.rows(); ++r) {
                         const bool valid = row_mask.empty() || row_mask[r];
                         if (valid) {
                           gx.row(r) += ((gh.row(r) - (sum_g + xhat.row(r).cwiseProduct(sum_gx)) * inv_m)
                                             .cwiseProduct(inv_std));
                         } else {
                           gx.row(r) += gh.row(r).cwiseProduct(inv_std);
                         }
                       }
                     });
  return res;
}

/// Normalization with frozen statistics; a per-column affine map.
template <typename T>
Var batch_norm_frozen(Tape<T>& t, Var x, Var gamma, Var beta, const RowVector<T>& mean, const RowVector<T>& var,
                      T eps) {
  const auto& xv = t.value(x);
  if (mean.cols() != xv.cols() || var.cols() != xv.cols()) throw ShapeError("batch_norm: running stats width");
  RowVector<T> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<T> xhat = (xv.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix<T> out = (xhat.array().rowwise() * t.value(gamma).row(0).array()).rowwise() + t.value(beta).row(0).array();
  const bool rg = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
  return t.record(std::move(out), rg, [x, gamma, beta, xhat = std::move(xhat), inv_std](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(gamma)) tp.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
    if (tp.requires_grad(beta)) tp.grad(beta) += g.colwise().sum();
    if (tp.requires_grad(x)) {
      tp.grad(x) += (g.array().rowwise() * (tp.value(gamma).row(0).array() * inv_std.array())).matrix();
    }
  });
}

// ---------------------------------------------------------------------------
// Segment pooling

/// Pooled rows per segment plus the bookkeeping backward needs.
template <typename T>
struct SegmentPoolResult {
  Var out;
  std::vector<char> present;             // segment has at least one row
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax;  // max only; -1 when absent
  std::vector<Index> counts;
};

/// Column-wise max (or mean) of x's rows grouped by segment id. Rows with
/// id < 0 are ignored. Absent segments produce zero rows. Max ties resolve
/// to the lowest row index.
template <typename T>
SegmentPoolResult<T> segment_pool(Tape<T>& t, Var x, const std::vector<Index>& segment, Index num_segments,
                                  PoolingKind kind) {
  const auto& xv = t.value(x);
  if (static_cast<Index>(segment.size()) != xv.rows()) {
    throw ShapeError("segment_pool: " + std::to_string(segment.size()) + " segment ids for " +
                     std::to_string(xv.rows()) + " rows");
  }
  const Index cols = xv.cols();
  SegmentPoolResult<T> res;
  res.present.assign(static_cast<std::size_t>(num_segments), 0);
  res.counts.assign(static_cast<std::size_t>(num_segments), 0);
  Matrix<T> out = Matrix<T>::Zero(num_segments, cols);
  for (Index r = 0; r < xv.rows(); ++r) {
    const Index s = segment[r];
    if (s < 0) continue;
    if (s >= num_segments) throw InvalidLabelError("segment_pool: segment id " + std::to_string(s) + " >= " +
                                                   std::to_string(num_segments));
    ++res.counts[s];
  }
  if (kind == PoolingKind::kMax) {
    res.argmax.setConstant(num_segments, cols, -1);
    for (Index r = 0; r < xv.rows(); ++r) {
      const Index s = segment[r];
      if (s < 0) continue;
      auto orow = out.row(s);
      auto arow = res.argmax.row(s);
      const auto xrow = xv.row(r);
      if (!res.present[s]) {
        orow = xrow;
        arow.setConstant(r);
        res.present[s] = 1;
        continue;
      }
      for (Index c = 0; c < cols; ++c) {
        if (xrow(c) > orow(c)) {
          orow(c) = xrow(c);
          arow(c) = r;
        }
      }
    }
  } else {
    for (Index r = 0; r < xv.rows(); ++r) {
      const Index s = segment[r];
      if (s < 0) continue;
      out.row(s) += xv.row(r);
      res.present[s] = 1;
    }
    for (Index s = 0; s < num_segments; ++s) {
      if (res.counts[s] > 0) out.row(s) /= static_cast<T>(res.counts[s]);
    }
  }
  if (kind == PoolingKind::kMax) {
    res.out = t.record(std::move(out), t.requires_grad(x), [x, argmax = res.argmax](Tape<T>& tp, const Matrix<T>& g) {
      auto& gx = tp.grad(x);
      for (Index s = 0; s < argmax.rows(); ++s) {
        for (Index c = 0; c < argmax.cols(); ++c) {
          const Index r = argmax(s, c);
          if (r >= 0) gx(r, c) += g(s, c);
        }
      }
    });
  } else {
    res.out = t.record(std::move(out), t.requires_grad(x),
                       [x, segment, counts = res.counts](Tape<T>& tp, const Matrix<T>& g) {
                         auto& gx = tp.grad(x);
                         for (Index r = 0; r < gx.rows(); ++r) {
                           const Index s = segment[r];
                           if (s < 0) continue;
                           gx.row(r) += g.row(s) / static_cast<T>(counts[s]);
                         }
                       });
  }
  return res;
}

// ---------------------------------------------------------------------------
// Losses

/// Mean softmax cross-entropy over rows whose target is >= 0.
template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, const std::vector<int>& target) {
  const auto& lv = t.value(logits);
  if (static_cast<Index>(target.size()) != lv.rows()) throw ShapeError("softmax_cross_entropy: target length");
  Matrix<T> prob(lv.rows(), lv.cols());
  T total = 0;
  Index count = 0;
  for (Index r = 0; r < lv.rows(); ++r) {
    const T mx = lv.row(r).maxCoeff();
    prob.row(r) = (lv.row(r).array() - mx).exp();
    const T z = prob.row(r).sum();
    prob.row(r) /= z;
    if (target[r] < 0) continue;
    if (target[r] >= lv.cols()) throw InvalidLabelError("softmax_cross_entropy: class " + std::to_string(target[r]));
    total += -(lv(r, target[r]) - mx - std::log(z));
    ++count;
  }
  Matrix<T> out(1, 1);
  out(0, 0) = count > 0 ? total / static_cast<T>(count) : T(0);
  return t.record(std::move(out), t.requires_grad(logits),
                  [logits, target, prob = std::move(prob), count](Tape<T>& tp, const Matrix<T>& g) {
                    if (count == 0) return;
                    auto& gl = tp.grad(logits);
                    const T s = g(0, 0) / static_cast<T>(count);
                    for (Index r = 0; r < prob.rows(); ++r) {
                      if (target[r] < 0) continue;
                      gl.row(r) += prob.row(r) * s;
                      gl(r, target[r]) -= s;
                    }
                  });
}

/// Row-wise softmax (value only).
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> p(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    p.row(r) = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

}  // namespace lpm::ad
