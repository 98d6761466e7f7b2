#include "zero_tta/simd.hpp"

namespace zero_tta::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void gemm_nt_scalar(const double* a, std::size_t rows_a, const double* b,
                    std::size_t rows_b, std::size_t dim, double* out) {
  for (std::size_t i = 0; i < rows_a; ++i) {
    for (std::size_t j = 0; j < rows_b; ++j) {
      out[i * rows_b + j] = dot_scalar(a + i * dim, b + j * dim, dim);
    }
  }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

constexpr Kernels kScalar{dot_scalar, gemm_nt_scalar, axpy_scalar};

}  // namespace

const Kernels& scalar_kernels() noexcept { return kScalar; }

}  // namespace zero_tta::simd
