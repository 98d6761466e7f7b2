#include <atomic>
#include <cstdlib>
#include <string_view>

#include "zero_tta/error.hpp"
#include "zero_tta/simd.hpp"

namespace zero_tta::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(ZERO_TTA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() noexcept {
  Isa best = detected_isa();
  if (const char* env = std::getenv("ZERO_TTA_ISA")) {
    std::string_view v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && best == Isa::Avx2) return Isa::Avx2;
  }
  return best;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

Isa detected_isa() noexcept {
  static const Isa isa = (avx2_kernels() != nullptr && cpu_has_avx2()) ? Isa::Avx2 : Isa::Scalar;
  return isa;
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

bool set_isa(Isa isa) noexcept {
  if (isa == Isa::Avx2 && detected_isa() != Isa::Avx2) return false;
  current().store(isa, std::memory_order_relaxed);
  return true;
}

const Kernels& kernels_for(Isa isa) {
  if (isa == Isa::Avx2) {
    if (detected_isa() != Isa::Avx2) throw Error("AVX2 kernels unavailable on this CPU");
    return *avx2_kernels();
  }
  return scalar_kernels();
}

const Kernels& active_kernels() noexcept {
  return active_isa() == Isa::Avx2 ? *avx2_kernels() : scalar_kernels();
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return active_kernels().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
  active_kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace zero_tta::simd
