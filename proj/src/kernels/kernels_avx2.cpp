// Compiled with -mavx2 -mfma. Nothing here may run before the dispatcher
// has confirmed CPU support.

#include <immintrin.h>

#include <cmath>

#include "aceseg/kernels/simd.hpp"

namespace aceseg::kernels::avx2 {

namespace {

// 4 rows x 16 columns of C held in eight registers while k is swept.
inline void gemm_f32_4x16(int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  __m256 c00 = _mm256_loadu_ps(c), c01 = _mm256_loadu_ps(c + 8);
  __m256 c10 = _mm256_loadu_ps(c + ldc), c11 = _mm256_loadu_ps(c + ldc + 8);
  __m256 c20 = _mm256_loadu_ps(c + 2 * ldc), c21 = _mm256_loadu_ps(c + 2 * ldc + 8);
  __m256 c30 = _mm256_loadu_ps(c + 3 * ldc), c31 = _mm256_loadu_ps(c + 3 * ldc + 8);
  for (int p = 0; p < k; ++p) {
    const float* bp = b + static_cast<std::size_t>(p) * ldb;
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    __m256 av = _mm256_broadcast_ss(a + p);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a + lda + p);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a + 2 * lda + p);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a + 3 * lda + p);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
  }
  _mm256_storeu_ps(c, c00);
  _mm256_storeu_ps(c + 8, c01);
  _mm256_storeu_ps(c + ldc, c10);
  _mm256_storeu_ps(c + ldc + 8, c11);
  _mm256_storeu_ps(c + 2 * ldc, c20);
  _mm256_storeu_ps(c + 2 * ldc + 8, c21);
  _mm256_storeu_ps(c + 3 * ldc, c30);
  _mm256_storeu_ps(c + 3 * ldc + 8, c31);
}

inline void gemm_f32_1x8(int k, const float* a, const float* b, int ldb, float* c) {
  __m256 acc = _mm256_loadu_ps(c);
  for (int p = 0; p < k; ++p)
    acc = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p), _mm256_loadu_ps(b + static_cast<std::size_t>(p) * ldb), acc);
  _mm256_storeu_ps(c, acc);
}

inline void gemm_f64_4x8(int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc), c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (int p = 0; p < k; ++p) {
    const double* bp = b + static_cast<std::size_t>(p) * ldb;
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

inline void gemm_f64_1x4(int k, const double* a, const double* b, int ldb, double* c) {
  __m256d acc = _mm256_loadu_pd(c);
  for (int p = 0; p < k; ++p)
    acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + static_cast<std::size_t>(p) * ldb), acc);
  _mm256_storeu_pd(c, acc);
}

// Single output element, same sequential k order as the vector paths.
template <typename T>
inline void gemm_1x1(int k, const T* a, const T* b, int ldb, T* c) {
  T acc = *c;
  for (int p = 0; p < k; ++p) acc = std::fma(a[p], b[static_cast<std::size_t>(p) * ldb], acc);
  *c = acc;
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  lo = _mm_hadd_pd(lo, lo);
  return _mm_cvtsd_f64(lo);
}

}  // namespace

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  int j = 0;
  for (; j + 16 <= n; j += 16) {
    int i = 0;
    for (; i + 4 <= m; i += 4)
      gemm_f32_4x16(k, a + static_cast<std::size_t>(i) * lda, lda, b + j, ldb, c + static_cast<std::size_t>(i) * ldc + j, ldc);
    for (; i < m; ++i) {
      gemm_f32_1x8(k, a + static_cast<std::size_t>(i) * lda, b + j, ldb, c + static_cast<std::size_t>(i) * ldc + j);
      gemm_f32_1x8(k, a + static_cast<std::size_t>(i) * lda, b + j + 8, ldb, c + static_cast<std::size_t>(i) * ldc + j + 8);
    }
  }
  for (; j + 8 <= n; j += 8)
    for (int i = 0; i < m; ++i)
      gemm_f32_1x8(k, a + static_cast<std::size_t>(i) * lda, b + j, ldb, c + static_cast<std::size_t>(i) * ldc + j);
  for (; j < n; ++j)
    for (int i = 0; i < m; ++i)
      gemm_1x1(k, a + static_cast<std::size_t>(i) * lda, b + j, ldb, c + static_cast<std::size_t>(i) * ldc + j);
}

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    int i = 0;
    for (; i + 4 <= m; i += 4)
      gemm_f64_4x8(k, a + static_cast<std::size_t>(i) * lda, lda, b + j, ldb, c + static_cast<std::size_t>(i) * ldc + j, ldc);
    for (; i < m; ++i) {
      gemm_f64_1x4(k, a + static_cast<std::size_t>(i) * lda, b + j, ldb, c + static_cast<std::size_t>(i) * ldc + j);
      gemm_f64_1x4(k, a + static_cast<std::size_t>(i) * lda, b + j + 4, ldb, c + static_cast<std::size_t>(i) * ldc + j + 4);
    }
  }
  for (; j + 4 <= n; j += 4)
    for (int i = 0; i < m; ++i)
      gemm_f64_1x4(k, a + static_cast<std::size_t>(i) * lda, b + j, ldb, c + static_cast<std::size_t>(i) * ldc + j);
  for (; j < n; ++j)
    for (int i = 0; i < m; ++i)
      gemm_1x1(k, a + static_cast<std::size_t>(i) * lda, b + j, ldb, c + static_cast<std::size_t>(i) * ldc + j);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

float dot(std::size_t n, const float* x, const float* y) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

}  // namespace aceseg::kernels::avx2
