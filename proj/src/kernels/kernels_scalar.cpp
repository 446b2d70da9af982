#include "aceseg/kernels/simd.hpp"

namespace aceseg::kernels::scalar {

namespace {

template <typename T>
void gemm_impl(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    const T* arow = a + static_cast<std::size_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void axpy_impl(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot_impl(std::size_t n, const T* x, const T* y) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

}  // namespace

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  gemm_impl(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
  gemm_impl(m, n, k, a, lda, b, ldb, c, ldc);
}
void axpy(std::size_t n, float alpha, const float* x, float* y) { axpy_impl(n, alpha, x, y); }
void axpy(std::size_t n, double alpha, const double* x, double* y) { axpy_impl(n, alpha, x, y); }
float dot(std::size_t n, const float* x, const float* y) { return dot_impl(n, x, y); }
double dot(std::size_t n, const double* x, const double* y) { return dot_impl(n, x, y); }

}  // namespace aceseg::kernels::scalar
