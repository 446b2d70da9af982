#pragma once

#include <cstddef>
#include <string_view>

// Dense inner loops behind the convolution operators. Each kernel has a
// scalar reference and, on x86-64, an AVX2+FMA variant; the variant is picked
// once at start-up from CPUID and can be pinned with ACESEG_SIMD=scalar|avx2
// or set_active_isa(). Every variant accumulates the k dimension of gemm in
// the same sequential order, so results only differ by FMA rounding.

namespace aceseg::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
Isa best_isa() noexcept;
Isa active_isa() noexcept;
/// Throws ConfigError when the CPU or the build lacks the requested ISA.
void set_active_isa(Isa isa);

/// C[m x n] += A[m x k] * B[k x n]; row-major with explicit leading dims.
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc);

/// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);

/// out[j x i] = in[i x j]; plain loop, used to feed gemm transposed operands.
template <typename T>
void transpose(int rows, int cols, const T* in, T* out) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(j) * rows + i] = in[static_cast<std::size_t>(i) * cols + j];
}

// Direct access to each backend, for equivalence tests and benchmarks.
namespace scalar {
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc);
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);
}  // namespace scalar

#if defined(ACESEG_HAVE_AVX2_KERNELS)
namespace avx2 {
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc);
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);
}  // namespace avx2
#endif

}  // namespace aceseg::kernels
