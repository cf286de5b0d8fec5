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

#include "lstcl/common.hpp"

// Dense inner-loop kernels over contiguous row-major buffers. Every entry
// point has a scalar reference implementation (kern::scalar) and, on x86-64
// with AVX2, a vectorized variant (kern::avx2). The top-level functions
// dispatch once at startup; LSTCL_SIMD=scalar|avx2|auto overrides, and
// set_isa() lets tests pin a path. The two paths agree up to floating-point
// reassociation and are equivalence-tested against each other.

namespace lstcl::kern {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);
bool avx2_supported();
Isa active_isa();
void set_isa(Isa isa);  // throws ConfigError if unsupported on this host

// C(m,n) = beta*C + A(m,k) * B(k,n)
void gemm_nn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);
// C(m,n) = beta*C + A(m,k) * B(n,k)^T
void gemm_nt(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);
// C(m,n) = beta*C + A(k,m)^T * B(k,n)
void gemm_tn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);

void add(int n, const Real* x, const Real* y, Real* out);
void sub(int n, const Real* x, const Real* y, Real* out);
void hadamard(int n, const Real* x, const Real* y, Real* out);
void scale(int n, Real alpha, const Real* x, Real* out);
void axpy(int n, Real alpha, const Real* x, Real* y);  // y += alpha*x
void lerp(int n, Real m, Real* acc, const Real* x);    // acc = m*acc+(1-m)*x
Real dot(int n, const Real* x, const Real* y);
Real sum(int n, const Real* x);
Real max_value(int n, const Real* x);  // n >= 1

namespace scalar {
void gemm_nn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);
void gemm_nt(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);
void gemm_tn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);
void add(int n, const Real* x, const Real* y, Real* out);
void sub(int n, const Real* x, const Real* y, Real* out);
void hadamard(int n, const Real* x, const Real* y, Real* out);
void scale(int n, Real alpha, const Real* x, Real* out);
void axpy(int n, Real alpha, const Real* x, Real* y);
void lerp(int n, Real m, Real* acc, const Real* x);
Real dot(int n, const Real* x, const Real* y);
Real sum(int n, const Real* x);
Real max_value(int n, const Real* x);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define LSTCL_HAVE_AVX2_KERNELS 1
namespace avx2 {
void gemm_nn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);
void gemm_nt(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);
void gemm_tn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c);
void add(int n, const Real* x, const Real* y, Real* out);
void sub(int n, const Real* x, const Real* y, Real* out);
void hadamard(int n, const Real* x, const Real* y, Real* out);
void scale(int n, Real alpha, const Real* x, Real* out);
void axpy(int n, Real alpha, const Real* x, Real* y);
void lerp(int n, Real m, Real* acc, const Real* x);
Real dot(int n, const Real* x, const Real* y);
Real sum(int n, const Real* x);
Real max_value(int n, const Real* x);
}  // namespace avx2
#endif

}  // namespace lstcl::kern
