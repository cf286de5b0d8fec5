// Copyright 2026 The lstcl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lstcl/autograd.hpp"

#include <cmath>
#include <utility>

#include "lstcl/kernels.hpp"

namespace lstcl::ag {

struct OpAccess {
  static Var push(Tape& t, Tensor value, bool wants_grad) {
    Tape::Node n;
    n.value = std::move(value);
    n.wants_grad = wants_grad;
    t.nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(t.nodes_.size() - 1)};
  }
  static void set_back(Tape& t, Var v, std::function<void(Tape&)> back) {
    t.nodes_[v.id].back = std::move(back);
  }
  static Tensor& grad_acc(Tape& t, Var v) {
    auto& n = t.nodes_[v.id];
    if (!n.grad_alloc) {
      n.grad = Tensor::zeros(n.value.dims());
      n.grad_alloc = true;
    }
    return n.grad;
  }
  static bool has_grad(const Tape& t, Var v) {
    return t.nodes_[v.id].grad_alloc;
  }
  static const Tensor& gout(const Tape& t, Var v) { return t.nodes_[v.id].grad; }
};

namespace {

using OA = OpAccess;

// Accumulate g into v's gradient buffer if v is tracked.
void accum(Tape& t, Var v, const Tensor& g) {
  if (!t.tracked(v)) return;
  Tensor& gv = OA::grad_acc(t, v);
  kern::axpy(static_cast<int>(g.numel()), Real(1), g.data(), gv.data());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

}  // namespace

Var Tape::leaf(Tensor v) { return OA::push(*this, std::move(v), true); }
Var Tape::constant(Tensor v) { return OA::push(*this, std::move(v), false); }

void Tape::backward(Var out) {
  if (val(out).numel() != 1)
    throw ShapeError("backward: output is not a scalar");
  for (auto& n : nodes_) {
    n.grad_alloc = false;
    n.grad = Tensor();
  }
  auto& root = nodes_[out.id];
  root.grad = Tensor::full(root.value.dims(), Real(1));
  root.grad_alloc = true;
  for (int32_t i = out.id; i >= 0; --i) {
    auto& n = nodes_[i];
    if (n.grad_alloc && n.back) n.back(*this);
  }
}

Tensor Tape::grad_or_zeros(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad_alloc) return n.grad;
  return Tensor::zeros(n.value.dims());
}

const Tensor* Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  return n.grad_alloc ? &n.grad : nullptr;
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  check_same_shape(av, bv, "add");
  Tensor out(av.dims());
  kern::add(static_cast<int>(av.numel()), av.data(), bv.data(), out.data());
  const bool wants = t.tracked(a) || t.tracked(b);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, b, o](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      accum(tp, a, g);
      accum(tp, b, g);
    });
  return o;
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  check_same_shape(av, bv, "sub");
  Tensor out(av.dims());
  kern::sub(static_cast<int>(av.numel()), av.data(), bv.data(), out.data());
  const bool wants = t.tracked(a) || t.tracked(b);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, b, o](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      accum(tp, a, g);
      if (tp.tracked(b)) {
        Tensor& gb = OA::grad_acc(tp, b);
        kern::axpy(static_cast<int>(g.numel()), Real(-1), g.data(), gb.data());
      }
    });
  return o;
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  check_same_shape(av, bv, "mul");
  Tensor out(av.dims());
  kern::hadamard(static_cast<int>(av.numel()), av.data(), bv.data(),
                 out.data());
  const bool wants = t.tracked(a) || t.tracked(b);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, b, o](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      const int n = static_cast<int>(g.numel());
      if (tp.tracked(a)) {
        Tensor tmp(g.dims());
        kern::hadamard(n, g.data(), tp.val(b).data(), tmp.data());
        Tensor& ga = OA::grad_acc(tp, a);
        kern::axpy(n, Real(1), tmp.data(), ga.data());
      }
      if (tp.tracked(b)) {
        Tensor tmp(g.dims());
        kern::hadamard(n, g.data(), tp.val(a).data(), tmp.data());
        Tensor& gb = OA::grad_acc(tp, b);
        kern::axpy(n, Real(1), tmp.data(), gb.data());
      }
    });
  return o;
}

Var scale(Tape& t, Var a, Real c) {
  const Tensor& av = t.val(a);
  Tensor out(av.dims());
  kern::scale(static_cast<int>(av.numel()), c, av.data(), out.data());
  const bool wants = t.tracked(a);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, c, o](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      Tensor& ga = OA::grad_acc(tp, a);
      kern::axpy(static_cast<int>(g.numel()), c, g.data(), ga.data());
    });
  return o;
}

Var add_scalar(Tape& t, Var a, Real c) {
  const Tensor& av = t.val(a);
  Tensor out = av;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
  const bool wants = t.tracked(a);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, o](Tape& tp) { accum(tp, a, OA::gout(tp, o)); });
  return o;
}

Var gelu(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor out(xv.dims());
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  for (int64_t i = 0; i < xv.numel(); ++i) {
    const double v = static_cast<double>(xv[i]);
    out[i] = static_cast<Real>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  }
  const bool wants = t.tracked(x);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, o](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      const Tensor& xv = tp.val(x);
      Tensor& gx = OA::grad_acc(tp, x);
      constexpr double kInvSqrt2 = 0.70710678118654752440;
      constexpr double kInvSqrt2Pi = 0.39894228040143267794;
      for (int64_t i = 0; i < xv.numel(); ++i) {
        const double v = static_cast<double>(xv[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        gx[i] += g[i] * static_cast<Real>(cdf + v * pdf);
      }
    });
  return o;
}

Var stop_gradient(Tape& t, Var x) {
  return OA::push(t, t.val(x), false);
}

Var reshape(Tape& t, Var x, std::vector<int> dims) {
  Tensor out = t.val(x).reshaped(std::move(dims));
  const bool wants = t.tracked(x);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, o](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      Tensor& gx = OA::grad_acc(tp, x);
      kern::axpy(static_cast<int>(g.numel()), Real(1), g.data(), gx.data());
    });
  return o;
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  const int m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw ShapeError("matmul: inner dims " + av.shape_str() + " x " +
                     bv.shape_str());
  Tensor out({m, n});
  kern::gemm_nn(m, n, k, av.data(), bv.data(), Real(0), out.data());
  const bool wants = t.tracked(a) || t.tracked(b);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, b, o, m, n, k](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      if (tp.tracked(a)) {
        Tensor& ga = OA::grad_acc(tp, a);
        kern::gemm_nt(m, k, n, g.data(), tp.val(b).data(), Real(1), ga.data());
      }
      if (tp.tracked(b)) {
        Tensor& gb = OA::grad_acc(tp, b);
        kern::gemm_tn(k, n, m, tp.val(a).data(), g.data(), Real(1), gb.data());
      }
    });
  return o;
}

Var matmul_nt(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  const int m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k)
    throw ShapeError("matmul_nt: inner dims " + av.shape_str() + " x " +
                     bv.shape_str() + "^T");
  Tensor out({m, n});
  kern::gemm_nt(m, n, k, av.data(), bv.data(), Real(0), out.data());
  const bool wants = t.tracked(a) || t.tracked(b);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, b, o, m, n, k](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      if (tp.tracked(a)) {
        Tensor& ga = OA::grad_acc(tp, a);
        kern::gemm_nn(m, k, n, g.data(), tp.val(b).data(), Real(1), ga.data());
      }
      if (tp.tracked(b)) {
        Tensor& gb = OA::grad_acc(tp, b);
        kern::gemm_tn(n, k, m, g.data(), tp.val(a).data(), Real(1), gb.data());
      }
    });
  return o;
}

Var add_rowvec(Tape& t, Var x, Var b) {
  const Tensor& xv = t.val(x);
  const Tensor& bv = t.val(b);
  const int rows = xv.rows(), cols = xv.cols();
  if (bv.numel() != cols)
    throw ShapeError("add_rowvec: bias length " + bv.shape_str() +
                     " vs cols " + std::to_string(cols));
  Tensor out(xv.dims());
  for (int r = 0; r < rows; ++r)
    kern::add(cols, xv.data() + static_cast<size_t>(r) * cols, bv.data(),
              out.data() + static_cast<size_t>(r) * cols);
  const bool wants = t.tracked(x) || t.tracked(b);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, b, o, rows, cols](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      accum(tp, x, g);
      if (tp.tracked(b)) {
        Tensor& gb = OA::grad_acc(tp, b);
        for (int r = 0; r < rows; ++r)
          kern::axpy(cols, Real(1), g.data() + static_cast<size_t>(r) * cols,
                     gb.data());
      }
    });
  return o;
}

Var gather_rows(Tape& t, Var x, std::vector<int> idx) {
  const Tensor& xv = t.val(x);
  const int rows = xv.rows(), cols = xv.cols();
  const int n = static_cast<int>(idx.size());
  Tensor out({n, cols});
  for (int i = 0; i < n; ++i) {
    const int r = idx[static_cast<size_t>(i)];
    if (r < 0 || r >= rows) throw IndexError("gather_rows: index out of range");
    for (int c = 0; c < cols; ++c) out.at2(i, c) = xv.at2(r, c);
  }
  const bool wants = t.tracked(x);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, o, idx = std::move(idx), cols](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      Tensor& gx = OA::grad_acc(tp, x);
      for (size_t i = 0; i < idx.size(); ++i)
        kern::axpy(cols, Real(1), g.data() + i * cols,
                   gx.data() + static_cast<size_t>(idx[i]) * cols);
    });
  return o;
}

Var concat_rows(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (av.cols() != bv.cols()) throw ShapeError("concat_rows: column mismatch");
  const int ra = av.rows(), rb = bv.rows(), cols = av.cols();
  Tensor out({ra + rb, cols});
  std::copy(av.data(), av.data() + av.numel(), out.data());
  std::copy(bv.data(), bv.data() + bv.numel(), out.data() + av.numel());
  const bool wants = t.tracked(a) || t.tracked(b);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, b, o, ra, rb, cols](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      if (tp.tracked(a)) {
        Tensor& ga = OA::grad_acc(tp, a);
        kern::axpy(ra * cols, Real(1), g.data(), ga.data());
      }
      if (tp.tracked(b)) {
        Tensor& gb = OA::grad_acc(tp, b);
        kern::axpy(rb * cols, Real(1),
                   g.data() + static_cast<size_t>(ra) * cols, gb.data());
      }
    });
  return o;
}

Var concat_rows_list(Tape& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows_list: empty input");
  const int cols = t.val(xs[0]).cols();
  int total = 0;
  bool wants = false;
  for (Var v : xs) {
    if (t.val(v).cols() != cols)
      throw ShapeError("concat_rows_list: column mismatch");
    total += t.val(v).rows();
    wants = wants || t.tracked(v);
  }
  Tensor out({total, cols});
  Real* dst = out.data();
  for (Var v : xs) {
    const Tensor& xv = t.val(v);
    std::copy(xv.data(), xv.data() + xv.numel(), dst);
    dst += xv.numel();
  }
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [xs, o](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      const Real* src = g.data();
      for (Var v : xs) {
        const int64_t n = tp.val(v).numel();
        if (tp.tracked(v)) {
          Tensor& gv = OA::grad_acc(tp, v);
          kern::axpy(static_cast<int>(n), Real(1), src, gv.data());
        }
        src += n;
      }
    });
  return o;
}

Var stack_rows(Tape& t, const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  const int cols = static_cast<int>(t.val(rows[0]).numel());
  const int n = static_cast<int>(rows.size());
  Tensor out({n, cols});
  bool wants = false;
  for (int i = 0; i < n; ++i) {
    const Tensor& rv = t.val(rows[static_cast<size_t>(i)]);
    if (rv.numel() != cols) throw ShapeError("stack_rows: ragged rows");
    std::copy(rv.data(), rv.data() + cols,
              out.data() + static_cast<size_t>(i) * cols);
    wants = wants || t.tracked(rows[static_cast<size_t>(i)]);
  }
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [rows, o, cols](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      for (size_t i = 0; i < rows.size(); ++i) {
        if (!tp.tracked(rows[i])) continue;
        Tensor& gr = OA::grad_acc(tp, rows[i]);
        kern::axpy(cols, Real(1), g.data() + i * cols, gr.data());
      }
    });
  return o;
}

Var slice_rows(Tape& t, Var x, int r0, int n) {
  const Tensor& xv = t.val(x);
  const int rows = xv.rows(), cols = xv.cols();
  if (r0 < 0 || n < 0 || r0 + n > rows)
    throw IndexError("slice_rows: range out of bounds");
  Tensor out({n, cols});
  std::copy(xv.data() + static_cast<size_t>(r0) * cols,
            xv.data() + static_cast<size_t>(r0 + n) * cols, out.data());
  const bool wants = t.tracked(x);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, o, r0, n, cols](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      Tensor& gx = OA::grad_acc(tp, x);
      kern::axpy(n * cols, Real(1), g.data(),
                 gx.data() + static_cast<size_t>(r0) * cols);
    });
  return o;
}

Var slice_cols(Tape& t, Var x, int c0, int n) {
  const Tensor& xv = t.val(x);
  const int rows = xv.rows(), cols = xv.cols();
  if (c0 < 0 || n < 0 || c0 + n > cols)
    throw IndexError("slice_cols: range out of bounds");
  Tensor out({rows, n});
  for (int r = 0; r < rows; ++r)
    std::copy(xv.data() + static_cast<size_t>(r) * cols + c0,
              xv.data() + static_cast<size_t>(r) * cols + c0 + n,
              out.data() + static_cast<size_t>(r) * n);
  const bool wants = t.tracked(x);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, o, c0, n, rows, cols](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      Tensor& gx = OA::grad_acc(tp, x);
      for (int r = 0; r < rows; ++r)
        kern::axpy(n, Real(1), g.data() + static_cast<size_t>(r) * n,
                   gx.data() + static_cast<size_t>(r) * cols + c0);
    });
  return o;
}

Var concat_cols(Tape& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: empty input");
  const int rows = t.val(xs[0]).rows();
  int total = 0;
  bool wants = false;
  for (Var v : xs) {
    if (t.val(v).rows() != rows) throw ShapeError("concat_cols: row mismatch");
    total += t.val(v).cols();
    wants = wants || t.tracked(v);
  }
  Tensor out({rows, total});
  int off = 0;
  for (Var v : xs) {
    const Tensor& xv = t.val(v);
    const int c = xv.cols();
    for (int r = 0; r < rows; ++r)
      std::copy(xv.data() + static_cast<size_t>(r) * c,
                xv.data() + static_cast<size_t>(r) * c + c,
                out.data() + static_cast<size_t>(r) * total + off);
    off += c;
  }
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [xs, o, rows, total](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      int off = 0;
      for (Var v : xs) {
        const int c = tp.val(v).cols();
        if (tp.tracked(v)) {
          Tensor& gv = OA::grad_acc(tp, v);
          for (int r = 0; r < rows; ++r)
            kern::axpy(c, Real(1),
                       g.data() + static_cast<size_t>(r) * total + off,
                       gv.data() + static_cast<size_t>(r) * c);
        }
        off += c;
      }
    });
  return o;
}

Var mean_rows(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  const int rows = xv.rows(), cols = xv.cols();
  if (rows == 0) throw ShapeError("mean_rows: empty matrix");
  Tensor out({1, cols});
  for (int r = 0; r < rows; ++r)
    kern::axpy(cols, Real(1), xv.data() + static_cast<size_t>(r) * cols,
               out.data());
  kern::scale(cols, Real(1) / static_cast<Real>(rows), out.data(), out.data());
  const bool wants = t.tracked(x);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, o, rows, cols](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      Tensor& gx = OA::grad_acc(tp, x);
      const Real inv = Real(1) / static_cast<Real>(rows);
      for (int r = 0; r < rows; ++r)
        kern::axpy(cols, inv, g.data(),
                   gx.data() + static_cast<size_t>(r) * cols);
    });
  return o;
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, Real eps) {
  const Tensor& xv = t.val(x);
  const int rows = xv.rows(), cols = xv.cols();
  if (t.val(gamma).numel() != cols || t.val(beta).numel() != cols)
    throw ShapeError("layer_norm: parameter length mismatch");
  const Tensor& gv = t.val(gamma);
  const Tensor& bv = t.val(beta);
  Tensor out(xv.dims());
  Tensor xhat(xv.dims());
  Tensor inv_std({rows});
  for (int r = 0; r < rows; ++r) {
    const Real* row = xv.data() + static_cast<size_t>(r) * cols;
    Real mean = kern::sum(cols, row) / static_cast<Real>(cols);
    Real var = 0;
    for (int c = 0; c < cols; ++c) {
      const Real d = row[c] - mean;
      var += d * d;
    }
    var /= static_cast<Real>(cols);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int c = 0; c < cols; ++c) {
      const Real xh = (row[c] - mean) * is;
      xhat.at2(r, c) = xh;
      out.at2(r, c) = gv[c] * xh + bv[c];
    }
  }
  const bool wants = t.tracked(x) || t.tracked(gamma) || t.tracked(beta);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o,
                 [x, gamma, beta, o, rows, cols, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Tape& tp) {
                   const Tensor& g = OA::gout(tp, o);
                   const Tensor& gv = tp.val(gamma);
                   for (int r = 0; r < rows; ++r) {
                     const Real* grow = g.data() + static_cast<size_t>(r) * cols;
                     const Real* xh = xhat.data() + static_cast<size_t>(r) * cols;
                     if (tp.tracked(x)) {
                       // h = g*gamma; dx = inv_std*(h - mean(h) - xh*mean(h*xh))
                       Real mean_h = 0, mean_hx = 0;
                       for (int c = 0; c < cols; ++c) {
                         const Real h = grow[c] * gv[c];
                         mean_h += h;
                         mean_hx += h * xh[c];
                       }
                       mean_h /= static_cast<Real>(cols);
                       mean_hx /= static_cast<Real>(cols);
                       Tensor& gx = OA::grad_acc(tp, x);
                       Real* gxr = gx.data() + static_cast<size_t>(r) * cols;
                       for (int c = 0; c < cols; ++c) {
                         const Real h = grow[c] * gv[c];
                         gxr[c] += inv_std[r] * (h - mean_h - xh[c] * mean_hx);
                       }
                     }
                     if (tp.tracked(gamma)) {
                       Tensor& gg = OA::grad_acc(tp, gamma);
                       for (int c = 0; c < cols; ++c)
                         gg[c] += grow[c] * xh[c];
                     }
                     if (tp.tracked(beta)) {
                       Tensor& gb = OA::grad_acc(tp, beta);
                       for (int c = 0; c < cols; ++c) gb[c] += grow[c];
                     }
                   }
                 });
  return o;
}

Var softmax_rows(Tape& t, Var x, const std::vector<uint8_t>* mask) {
  const Tensor& xv = t.val(x);
  const int rows = xv.rows(), cols = xv.cols();
  if (mask != nullptr &&
      static_cast<int64_t>(mask->size()) != static_cast<int64_t>(rows) * cols)
    throw ShapeError("softmax_rows: mask size mismatch");
  Tensor out(xv.dims());
  for (int r = 0; r < rows; ++r) {
    const Real* row = xv.data() + static_cast<size_t>(r) * cols;
    const uint8_t* mrow =
        mask ? mask->data() + static_cast<size_t>(r) * cols : nullptr;
    // row max over unmasked entries keeps exp() in range
    Real mx = 0;
    bool any = false;
    for (int c = 0; c < cols; ++c) {
      if (mrow && !mrow[c]) continue;
      if (!any || row[c] > mx) mx = row[c];
      any = true;
    }
    if (!any)
      throw AttentionError("softmax_rows: fully masked row " +
                           std::to_string(r));
    Real denom = 0;
    Real* orow = out.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      if (mrow && !mrow[c]) {
        orow[c] = Real(0);
        continue;
      }
      const Real e = std::exp(row[c] - mx);
      orow[c] = e;
      denom += e;
    }
    const Real inv = Real(1) / denom;
    for (int c = 0; c < cols; ++c) orow[c] *= inv;
  }
  const bool wants = t.tracked(x);
  std::vector<uint8_t> mcopy;
  if (mask) mcopy = *mask;
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o,
                 [x, o, rows, cols, mcopy = std::move(mcopy)](Tape& tp) {
                   const Tensor& g = OA::gout(tp, o);
                   const Tensor& p = tp.val(o);
                   Tensor& gx = OA::grad_acc(tp, x);
                   const bool has_mask = !mcopy.empty();
                   for (int r = 0; r < rows; ++r) {
                     const Real* grow = g.data() + static_cast<size_t>(r) * cols;
                     const Real* prow = p.data() + static_cast<size_t>(r) * cols;
                     const uint8_t* mrow = has_mask
                         ? mcopy.data() + static_cast<size_t>(r) * cols
                         : nullptr;
                     Real s = 0;
                     for (int c = 0; c < cols; ++c) s += grow[c] * prow[c];
                     Real* gxr = gx.data() + static_cast<size_t>(r) * cols;
                     for (int c = 0; c < cols; ++c) {
                       if (mrow && !mrow[c]) continue;
                       gxr[c] += prow[c] * (grow[c] - s);
                     }
                   }
                 });
  return o;
}

Var cross_entropy_rows(Tape& t, Var logits, const std::vector<int>& targets) {
  const Tensor& zv = t.val(logits);
  const int rows = zv.rows(), cols = zv.cols();
  if (static_cast<int>(targets.size()) != rows)
    throw ShapeError("cross_entropy_rows: target count mismatch");
  Tensor probs(zv.dims());
  double loss = 0;
  for (int r = 0; r < rows; ++r) {
    const int target = targets[static_cast<size_t>(r)];
    if (target < 0 || target >= cols)
      throw IndexError("cross_entropy_rows: target out of range");
    const Real* row = zv.data() + static_cast<size_t>(r) * cols;
    const Real mx = kern::max_value(cols, row);
    double denom = 0;
    Real* prow = probs.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      const double e = std::exp(static_cast<double>(row[c] - mx));
      prow[c] = static_cast<Real>(e);
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (int c = 0; c < cols; ++c)
      prow[c] = static_cast<Real>(static_cast<double>(prow[c]) * inv);
    loss += -(static_cast<double>(row[target] - mx) - std::log(denom));
  }
  if (!std::isfinite(loss))
    throw NumericError("cross_entropy_rows: non-finite loss");
  Tensor out({1});
  out[0] = static_cast<Real>(loss);
  const bool wants = t.tracked(logits);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o,
                 [logits, o, rows, cols, targets,
                  probs = std::move(probs)](Tape& tp) {
                   const Real gs = OA::gout(tp, o)[0];
                   Tensor& gz = OA::grad_acc(tp, logits);
                   for (int r = 0; r < rows; ++r) {
                     const Real* prow =
                         probs.data() + static_cast<size_t>(r) * cols;
                     Real* grow = gz.data() + static_cast<size_t>(r) * cols;
                     for (int c = 0; c < cols; ++c) grow[c] += gs * prow[c];
                     grow[targets[static_cast<size_t>(r)]] -= gs;
                   }
                 });
  return o;
}

Var l2_normalize_rows(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  const int rows = xv.rows(), cols = xv.cols();
  Tensor out(xv.dims());
  Tensor norms({rows});
  for (int r = 0; r < rows; ++r) {
    const Real* row = xv.data() + static_cast<size_t>(r) * cols;
    const Real n = std::sqrt(kern::dot(cols, row, row));
    if (n < Real(1e-12))
      throw NumericError("l2_normalize_rows: norm below 1e-12");
    norms[r] = n;
    kern::scale(cols, Real(1) / n, row,
                out.data() + static_cast<size_t>(r) * cols);
  }
  const bool wants = t.tracked(x);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, o, rows, cols, norms = std::move(norms)](Tape& tp) {
      const Tensor& g = OA::gout(tp, o);
      const Tensor& u = tp.val(o);
      Tensor& gx = OA::grad_acc(tp, x);
      for (int r = 0; r < rows; ++r) {
        const Real* grow = g.data() + static_cast<size_t>(r) * cols;
        const Real* urow = u.data() + static_cast<size_t>(r) * cols;
        const Real ug = kern::dot(cols, urow, grow);
        Real* gxr = gx.data() + static_cast<size_t>(r) * cols;
        const Real inv = Real(1) / norms[r];
        for (int c = 0; c < cols; ++c)
          gxr[c] += inv * (grow[c] - urow[c] * ug);
      }
    });
  return o;
}

Var dot(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (av.numel() != bv.numel()) throw ShapeError("dot: size mismatch");
  Tensor out({1});
  out[0] = kern::dot(static_cast<int>(av.numel()), av.data(), bv.data());
  const bool wants = t.tracked(a) || t.tracked(b);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [a, b, o](Tape& tp) {
      const Real gs = OA::gout(tp, o)[0];
      const int n = static_cast<int>(tp.val(a).numel());
      if (tp.tracked(a)) {
        Tensor& ga = OA::grad_acc(tp, a);
        kern::axpy(n, gs, tp.val(b).data(), ga.data());
      }
      if (tp.tracked(b)) {
        Tensor& gb = OA::grad_acc(tp, b);
        kern::axpy(n, gs, tp.val(a).data(), gb.data());
      }
    });
  return o;
}

Var sum(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor out({1});
  out[0] = kern::sum(static_cast<int>(xv.numel()), xv.data());
  const bool wants = t.tracked(x);
  Var o = OA::push(t, std::move(out), wants);
  if (wants)
    OA::set_back(t, o, [x, o](Tape& tp) {
      const Real gs = OA::gout(tp, o)[0];
      Tensor& gx = OA::grad_acc(tp, x);
      for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gs;
    });
  return o;
}

}  // namespace lstcl::ag
