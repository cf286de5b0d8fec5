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

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lstcl/tensor.hpp"

// Reverse-mode automatic differentiation over a linear tape. Operations
// evaluate eagerly and record a backward closure; Tape::backward replays the
// closures in reverse. Nodes that cannot reach a gradient-tracked leaf carry
// no closure, so constant subgraphs (momentum encoders, stop-gradient keys)
// cost nothing on the backward pass and receive exactly zero gradient.

namespace lstcl::ag {

struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Var leaf(Tensor v);      // gradient-tracked input
  Var constant(Tensor v);  // not tracked

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  bool tracked(Var v) const { return nodes_[v.id].wants_grad; }

  // Seeds d(out)/d(out) = 1 for a single-element output and accumulates
  // gradients into every tracked node.
  void backward(Var out);

  // Gradient of the last backward() w.r.t. v; zeros if v was never reached.
  Tensor grad_or_zeros(Var v) const;
  const Tensor* grad(Var v) const;

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool wants_grad = false;
    bool grad_alloc = false;
    std::function<void(Tape&)> back;
  };

  friend struct OpAccess;
  std::vector<Node> nodes_;
};

// Elementwise / shape-preserving
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, Real c);
Var add_scalar(Tape& t, Var a, Real c);
Var gelu(Tape& t, Var x);
Var stop_gradient(Tape& t, Var x);
Var reshape(Tape& t, Var x, std::vector<int> dims);

// Matrix ops; operands treated as 2-D (rows x cols).
Var matmul(Tape& t, Var a, Var b);     // (M,K)x(K,N)
Var matmul_nt(Tape& t, Var a, Var b);  // (M,K)x(N,K)^T -> (M,N)
Var add_rowvec(Tape& t, Var x, Var b);

// Row plumbing
Var gather_rows(Tape& t, Var x, std::vector<int> idx);
Var concat_rows(Tape& t, Var a, Var b);
Var concat_rows_list(Tape& t, const std::vector<Var>& xs);
Var stack_rows(Tape& t, const std::vector<Var>& rows);
Var slice_rows(Tape& t, Var x, int r0, int n);
Var slice_cols(Tape& t, Var x, int c0, int n);
Var concat_cols(Tape& t, const std::vector<Var>& xs);
Var mean_rows(Tape& t, Var x);

// Normalization / attention / losses
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, Real eps = Real(1e-5));
// mask: nullptr = dense; otherwise rows*cols bytes, nonzero = attend.
// A fully masked row raises AttentionError.
Var softmax_rows(Tape& t, Var x, const std::vector<uint8_t>* mask = nullptr);
Var cross_entropy_rows(Tape& t, Var logits, const std::vector<int>& targets);
Var l2_normalize_rows(Tape& t, Var x);
Var dot(Tape& t, Var a, Var b);
Var sum(Tape& t, Var x);

}  // namespace lstcl::ag
