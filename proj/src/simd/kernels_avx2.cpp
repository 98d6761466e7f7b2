// Compiled with -mavx2 -mfma. Nothing here may run before dispatch.cpp has
// confirmed CPU support.

#include "zero_tta/simd.hpp"

#if defined(ZERO_TTA_HAVE_AVX2)

#include <immintrin.h>

namespace zero_tta::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

// Four output columns per pass so each a-row load feeds four FMAs.
void gemm_nt_avx2(const double* a, std::size_t rows_a, const double* b,
                  std::size_t rows_b, std::size_t dim, double* out) {
  for (std::size_t i = 0; i < rows_a; ++i) {
    const double* ai = a + i * dim;
    double* oi = out + i * rows_b;
    std::size_t j = 0;
    for (; j + 4 <= rows_b; j += 4) {
      const double* b0 = b + (j + 0) * dim;
      const double* b1 = b + (j + 1) * dim;
      const double* b2 = b + (j + 2) * dim;
      const double* b3 = b + (j + 3) * dim;
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd();
      __m256d s3 = _mm256_setzero_pd();
      std::size_t k = 0;
      for (; k + 4 <= dim; k += 4) {
        __m256d av = _mm256_loadu_pd(ai + k);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + k), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + k), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + k), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + k), s3);
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; k < dim; ++k) {
        r0 += ai[k] * b0[k];
        r1 += ai[k] * b1[k];
        r2 += ai[k] * b2[k];
        r3 += ai[k] * b3[k];
      }
      oi[j + 0] = r0;
      oi[j + 1] = r1;
      oi[j + 2] = r2;
      oi[j + 3] = r3;
    }
    for (; j < rows_b; ++j) oi[j] = dot_avx2(ai, b + j * dim, dim);
  }
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

constexpr Kernels kAvx2{dot_avx2, gemm_nt_avx2, axpy_avx2};

}  // namespace

const Kernels* avx2_kernels() noexcept { return &kAvx2; }

}  // namespace zero_tta::simd

#else

namespace zero_tta::simd {
const Kernels* avx2_kernels() noexcept { return nullptr; }
}  // namespace zero_tta::simd

#endif
