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

// Reference kernels. Plain loops, no tricks: these define the semantics the
// SIMD variants are tested against.

#include "lstcl/kernels.hpp"

namespace lstcl::kern::scalar {

void gemm_nn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  for (int i = 0; i < m; ++i) {
    Real* crow = c + static_cast<size_t>(i) * n;
    if (beta == Real(0)) {
      for (int j = 0; j < n; ++j) crow[j] = Real(0);
    } else if (beta != Real(1)) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int p = 0; p < k; ++p) {
      const Real av = a[static_cast<size_t>(i) * k + p];
      const Real* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<size_t>(i) * k;
    Real* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const Real* brow = b + static_cast<size_t>(j) * k;
      Real acc = 0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = (beta == Real(0)) ? acc : beta * crow[j] + acc;
    }
  }
}

void gemm_tn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  if (beta == Real(0)) {
    for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] = Real(0);
  } else if (beta != Real(1)) {
    for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] *= beta;
  }
  for (int p = 0; p < k; ++p) {
    const Real* arow = a + static_cast<size_t>(p) * m;
    const Real* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const Real av = arow[i];
      Real* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void add(int n, const Real* x, const Real* y, Real* out) {
  for (int i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void sub(int n, const Real* x, const Real* y, Real* out) {
  for (int i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void hadamard(int n, const Real* x, const Real* y, Real* out) {
  for (int i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(int n, Real alpha, const Real* x, Real* out) {
  for (int i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void axpy(int n, Real alpha, const Real* x, Real* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void lerp(int n, Real m, Real* acc, const Real* x) {
  const Real w = Real(1) - m;
  for (int i = 0; i < n; ++i) acc[i] = m * acc[i] + w * x[i];
}

Real dot(int n, const Real* x, const Real* y) {
  Real acc = 0;
  for (int i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

Real sum(int n, const Real* x) {
  Real acc = 0;
  for (int i = 0; i < n; ++i) acc += x[i];
  return acc;
}

Real max_value(int n, const Real* x) {
  Real best = x[0];
  for (int i = 1; i < n; ++i)
    if (x[i] > best) best = x[i];
  return best;
}

}  // namespace lstcl::kern::scalar
