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

// AVX2+FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; callers must reach it through the runtime dispatcher.

#include "lstcl/kernels.hpp"

#if defined(LSTCL_HAVE_AVX2_KERNELS)

#include <immintrin.h>

namespace lstcl::kern::avx2 {
namespace {

// Width-generic wrappers over __m256 / __m256d so each kernel body is written
// once for both precisions.
template <class T>
struct V;

template <>
struct V<float> {
  using reg = __m256;
  static constexpr int width = 8;
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg zero() { return _mm256_setzero_ps(); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg max(reg a, reg b) { return _mm256_max_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
  }
  static float hmax(reg v) {
    alignas(32) float tmp[8];
    _mm256_store_ps(tmp, v);
    float best = tmp[0];
    for (int i = 1; i < 8; ++i)
      if (tmp[i] > best) best = tmp[i];
    return best;
  }
};

template <>
struct V<double> {
  using reg = __m256d;
  static constexpr int width = 4;
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg zero() { return _mm256_setzero_pd(); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    lo = _mm_add_sd(lo, sh);
    return _mm_cvtsd_f64(lo);
  }
  static double hmax(reg v) {
    alignas(32) double tmp[4];
    _mm256_store_pd(tmp, v);
    double best = tmp[0];
    for (int i = 1; i < 4; ++i)
      if (tmp[i] > best) best = tmp[i];
    return best;
  }
};

using W = V<Real>;
constexpr int kW = W::width;

// crow += av * brow, vectorized over columns.
inline void saxpy_row(int n, Real av, const Real* brow, Real* crow) {
  const typename W::reg a = W::set1(av);
  int j = 0;
  for (; j + kW <= n; j += kW)
    W::store(crow + j, W::fma(a, W::load(brow + j), W::load(crow + j)));
  for (; j < n; ++j) crow[j] += av * brow[j];
}

inline void apply_beta(size_t count, Real beta, Real* c) {
  if (beta == Real(0)) {
    size_t i = 0;
    const typename W::reg z = W::zero();
    for (; i + kW <= count; i += kW) W::store(c + i, z);
    for (; i < count; ++i) c[i] = Real(0);
  } else if (beta != Real(1)) {
    const typename W::reg bv = W::set1(beta);
    size_t i = 0;
    for (; i + kW <= count; i += kW)
      W::store(c + i, W::mul(bv, W::load(c + i)));
    for (; i < count; ++i) c[i] *= beta;
  }
}

}  // namespace

void gemm_nn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  apply_beta(static_cast<size_t>(m) * n, beta, c);
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<size_t>(i) * k;
    Real* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p)
      saxpy_row(n, arow[p], b + static_cast<size_t>(p) * n, crow);
  }
}

void gemm_nt(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<size_t>(i) * k;
    Real* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const Real* brow = b + static_cast<size_t>(j) * k;
      typename W::reg acc = W::zero();
      int p = 0;
      for (; p + kW <= k; p += kW)
        acc = W::fma(W::load(arow + p), W::load(brow + p), acc);
      Real s = W::hsum(acc);
      for (; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = (beta == Real(0)) ? s : beta * crow[j] + s;
    }
  }
}

void gemm_tn(int m, int n, int k, const Real* a, const Real* b, Real beta,
             Real* c) {
  apply_beta(static_cast<size_t>(m) * n, beta, c);
  for (int p = 0; p < k; ++p) {
    const Real* arow = a + static_cast<size_t>(p) * m;
    const Real* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i)
      saxpy_row(n, arow[i], brow, c + static_cast<size_t>(i) * n);
  }
}

void add(int n, const Real* x, const Real* y, Real* out) {
  int i = 0;
  for (; i + kW <= n; i += kW)
    W::store(out + i, W::add(W::load(x + i), W::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub(int n, const Real* x, const Real* y, Real* out) {
  int i = 0;
  for (; i + kW <= n; i += kW)
    W::store(out + i, W::sub(W::load(x + i), W::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void hadamard(int n, const Real* x, const Real* y, Real* out) {
  int i = 0;
  for (; i + kW <= n; i += kW)
    W::store(out + i, W::mul(W::load(x + i), W::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(int n, Real alpha, const Real* x, Real* out) {
  const typename W::reg a = W::set1(alpha);
  int i = 0;
  for (; i + kW <= n; i += kW) W::store(out + i, W::mul(a, W::load(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void axpy(int n, Real alpha, const Real* x, Real* y) {
  const typename W::reg a = W::set1(alpha);
  int i = 0;
  for (; i + kW <= n; i += kW)
    W::store(y + i, W::fma(a, W::load(x + i), W::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void lerp(int n, Real m, Real* acc, const Real* x) {
  const Real w = Real(1) - m;
  const typename W::reg mv = W::set1(m);
  const typename W::reg wv = W::set1(w);
  int i = 0;
  for (; i + kW <= n; i += kW) {
    typename W::reg r = W::mul(mv, W::load(acc + i));
    W::store(acc + i, W::fma(wv, W::load(x + i), r));
  }
  for (; i < n; ++i) acc[i] = m * acc[i] + w * x[i];
}

Real dot(int n, const Real* x, const Real* y) {
  typename W::reg acc = W::zero();
  int i = 0;
  for (; i + kW <= n; i += kW)
    acc = W::fma(W::load(x + i), W::load(y + i), acc);
  Real s = W::hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

Real sum(int n, const Real* x) {
  typename W::reg acc = W::zero();
  int i = 0;
  for (; i + kW <= n; i += kW) acc = W::add(acc, W::load(x + i));
  Real s = W::hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

Real max_value(int n, const Real* x) {
  if (n < kW) return scalar::max_value(n, x);
  typename W::reg acc = W::load(x);
  int i = kW;
  for (; i + kW <= n; i += kW) acc = W::max(acc, W::load(x + i));
  Real best = W::hmax(acc);
  for (; i < n; ++i)
    if (x[i] > best) best = x[i];
  return best;
}

}  // namespace lstcl::kern::avx2

#endif  // LSTCL_HAVE_AVX2_KERNELS
