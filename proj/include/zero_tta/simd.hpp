#pragma once

// Inner-loop kernels with a scalar reference path and an AVX2/FMA path.
//
// The active path is chosen once at startup from CPUID and can be pinned with
// the ZERO_TTA_ISA environment variable ("scalar" or "avx2") or set_isa().
// Both paths compute the same quantities; only the summation order differs,
// so results agree to a few ulps, not bitwise.

#include <cstddef>
#include <span>
#include <string_view>

namespace zero_tta::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa) noexcept;

/// Best ISA supported by this CPU and build.
Isa detected_isa() noexcept;
/// ISA currently used by the dispatching entry points.
Isa active_isa() noexcept;
/// Pins the dispatching entry points; returns false if `isa` is unavailable.
bool set_isa(Isa isa) noexcept;

/// Kernel table. Every path exports the same signatures.
struct Kernels {
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// out[i * cols_b + j] = dot(a_i, b_j) for row-major a (rows_a x dim) and
  /// b (rows_b x dim).
  void (*gemm_nt)(const double* a, std::size_t rows_a, const double* b,
                  std::size_t rows_b, std::size_t dim, double* out);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const Kernels& scalar_kernels() noexcept;
/// Null when the build has no AVX2 path.
const Kernels* avx2_kernels() noexcept;
const Kernels& kernels_for(Isa isa);
const Kernels& active_kernels() noexcept;

// Dispatching convenience wrappers.

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace zero_tta::simd
