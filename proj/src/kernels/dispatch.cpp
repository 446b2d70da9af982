#include <atomic>
#include <cstdlib>
#include <string>

#include "aceseg/error.hpp"
#include "aceseg/kernels/simd.hpp"

namespace aceseg::kernels {

namespace {

struct Table {
  void (*gemm_f)(int, int, int, const float*, int, const float*, int, float*, int);
  void (*gemm_d)(int, int, int, const double*, int, const double*, int, double*, int);
  void (*axpy_f)(std::size_t, float, const float*, float*);
  void (*axpy_d)(std::size_t, double, const double*, double*);
  float (*dot_f)(std::size_t, const float*, const float*);
  double (*dot_d)(std::size_t, const double*, const double*);
};

constexpr Table kScalarTable{scalar::gemm, scalar::gemm, scalar::axpy,
                             scalar::axpy, scalar::dot,  scalar::dot};
#if defined(ACESEG_HAVE_AVX2_KERNELS)
constexpr Table kAvx2Table{avx2::gemm, avx2::gemm, avx2::axpy,
                           avx2::axpy, avx2::dot,  avx2::dot};
#endif

const Table* table_for(Isa isa) {
#if defined(ACESEG_HAVE_AVX2_KERNELS)
  if (isa == Isa::kAvx2) return &kAvx2Table;
#endif
  (void)isa;
  return &kScalarTable;
}

Isa initial_isa() {
  if (const char* env = std::getenv("ACESEG_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && isa_supported(Isa::kAvx2)) return Isa::kAvx2;
  }
  return best_isa();
}

struct Active {
  std::atomic<Isa> isa{initial_isa()};
  std::atomic<const Table*> table{table_for(isa.load())};
};

Active& active() {
  static Active a;
  return a;
}

const Table& tbl() { return *active().table.load(std::memory_order_relaxed); }

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2:
#if defined(ACESEG_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa best_isa() noexcept { return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar; }

Isa active_isa() noexcept { return active().isa.load(); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa))
    throw ConfigError("SIMD variant '" + std::string(isa_name(isa)) + "' is not available on this machine");
  active().isa.store(isa);
  active().table.store(table_for(isa));
}

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  tbl().gemm_f(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  tbl().gemm_d(m, n, k, a, lda, b, ldb, c, ldc);
}
void axpy(std::size_t n, float alpha, const float* x, float* y) { tbl().axpy_f(n, alpha, x, y); }
void axpy(std::size_t n, double alpha, const double* x, double* y) { tbl().axpy_d(n, alpha, x, y); }
float dot(std::size_t n, const float* x, const float* y) { return tbl().dot_f(n, x, y); }
double dot(std::size_t n, const double* x, const double* y) { return tbl().dot_d(n, x, y); }

}  // namespace aceseg::kernels
