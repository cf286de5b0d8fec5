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

#include <cstdlib>
#include <cstring>
#include <string>

#include "lstcl/kernels.hpp"

namespace lstcl::kern {
namespace {

struct Table {
  void (*gemm_nn)(int, int, int, const Real*, const Real*, Real, Real*);
  void (*gemm_nt)(int, int, int, const Real*, const Real*, Real, Real*);
  void (*gemm_tn)(int, int, int, const Real*, const Real*, Real, Real*);
  void (*add)(int, const Real*, const Real*, Real*);
  void (*sub)(int, const Real*, const Real*, Real*);
  void (*hadamard)(int, const Real*, const Real*, Real*);
  void (*scale)(int, Real, const Real*, Real*);
  void (*axpy)(int, Real, const Real*, Real*);
  void (*lerp)(int, Real, Real*, const Real*);
  Real (*dot)(int, const Real*, const Real*);
  Real (*sum)(int, const Real*);
  Real (*max_value)(int, const Real*);
};

constexpr Table kScalarTable = {
    scalar::gemm_nn, scalar::gemm_nt,  scalar::gemm_tn, scalar::add,
    scalar::sub,     scalar::hadamard, scalar::scale,   scalar::axpy,
    scalar::lerp,    scalar::dot,      scalar::sum,     scalar::max_value};

#if defined(LSTCL_HAVE_AVX2_KERNELS)
constexpr Table kAvx2Table = {
    avx2::gemm_nn, avx2::gemm_nt,  avx2::gemm_tn, avx2::add,
    avx2::sub,     avx2::hadamard, avx2::scale,   avx2::axpy,
    avx2::lerp,    avx2::dot,      avx2::sum,     avx2::max_value};
#endif

Isa g_isa = Isa::scalar;
const Table* g_table = &kScalarTable;
bool g_initialized = false;

Isa pick_default() {
  const char* env = std::getenv("LSTCL_SIMD");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!avx2_supported())
        throw ConfigError("LSTCL_SIMD=avx2 but host lacks AVX2");
      return Isa::avx2;
    }
    if (std::strcmp(env, "auto") != 0)
      throw ConfigError(std::string("unknown LSTCL_SIMD value: ") + env);
  }
  return avx2_supported() ? Isa::avx2 : Isa::scalar;
}

void ensure_init() {
  if (!g_initialized) {
    set_isa(pick_default());
    g_initialized = true;
  }
}

}  // namespace

const char* isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

bool avx2_supported() {
#if defined(LSTCL_HAVE_AVX2_KERNELS)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() {
  ensure_init();
  return g_isa;
}

void set_isa(Isa isa) {
  if (isa == Isa::avx2) {
#if defined(LSTCL_HAVE_AVX2_KERNELS)
    if (!avx2_supported()) throw ConfigError("AVX2 not supported on this host");
    g_table = &kAvx2Table;
#else
    throw ConfigError("AVX2 kernels not built on this platform");
#endif
  } else {
    g_table = &kScalarTable;
  }
  g_isa = isa;
  g_initialized = true;
}

void gemm_nn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  ensure_init();
  g_table->gemm_nn(m, n, k, a, b, beta, c);
}
void gemm_nt(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  ensure_init();
  g_table->gemm_nt(m, n, k, a, b, beta, c);
}
void gemm_tn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  ensure_init();
  g_table->gemm_tn(m, n, k, a, b, beta, c);
}
void add(int n, const Real* x, const Real* y, Real* out) {
  ensure_init();
  g_table->add(n, x, y, out);
}
void sub(int n, const Real* x, const Real* y, Real* out) {
  ensure_init();
  g_table->sub(n, x, y, out);
}
void hadamard(int n, const Real* x, const Real* y, Real* out) {
  ensure_init();
  g_table->hadamard(n, x, y, out);
}
void scale(int n, Real alpha, const Real* x, Real* out) {
  ensure_init();
  g_table->scale(n, alpha, x, out);
}
void axpy(int n, Real alpha, const Real* x, Real* y) {
  ensure_init();
  g_table->axpy(n, alpha, x, y);
}
void lerp(int n, Real m, Real* acc, const Real* x) {
  ensure_init();
  g_table->lerp(n, m, acc, x);
}
Real dot(int n, const Real* x, const Real* y) {
  ensure_init();
  return g_table->dot(n, x, y);
}
Real sum(int n, const Real* x) {
  ensure_init();
  return g_table->sum(n, x);
}
Real max_value(int n, const Real* x) {
  ensure_init();
  return g_table->max_value(n, x);
}

}  // namespace lstcl::kern
