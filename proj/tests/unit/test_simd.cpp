#include <doctest.h>

#include <cmath>
#include <vector>

#include "synthetic.hpp"
#include "zero_tta/simd.hpp"
#include "zero_tta/zero_kernel.hpp"

using namespace zero_tta;
using namespace zero_tta::testing;

namespace {

std::vector<double> draw(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

// Both paths sum the same terms in different orders; bound the gap by the
// sum of magnitudes.
double tolerance(const std::vector<double>& a, const std::vector<double>& b, std::size_t off, std::size_t n) {
  double mag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[off + i] * b[off + i]);
  return 1e-15 * (mag + 1.0) * 8;
}

struct IsaGuard {
  simd::Isa saved = simd::active_isa();
  ~IsaGuard() { simd::set_isa(saved); }
};

}  // namespace

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const auto* avx = simd::avx2_kernels();
  if (avx == nullptr || simd::detected_isa() != simd::Isa::Avx2) {
    MESSAGE("AVX2 path not available on this build/CPU; skipping equivalence");
    return;
  }
  const auto& ref = simd::scalar_kernels();
  Rng rng(1);

  SUBCASE("dot, every length and misalignment") {
    for (std::size_t n = 0; n <= 67; ++n) {
      for (std::size_t off = 0; off < 3; ++off) {
        const auto a = draw(rng, n + off);
        const auto b = draw(rng, n + off);
        const double r = ref.dot(a.data() + off, b.data() + off, n);
        const double v = avx->dot(a.data() + off, b.data() + off, n);
        CHECK(std::abs(r - v) <= tolerance(a, b, off, n));
      }
    }
  }

  SUBCASE("gemm_nt, ragged shapes") {
    for (std::size_t rows_a : {1u, 3u, 4u, 7u}) {
      for (std::size_t rows_b : {1u, 2u, 4u, 5u, 9u}) {
        for (std::size_t dim : {1u, 4u, 15u, 16u, 33u}) {
          const auto a = draw(rng, rows_a * dim);
          const auto b = draw(rng, rows_b * dim);
          std::vector<double> out_ref(rows_a * rows_b), out_avx(rows_a * rows_b, -7.0);
          ref.gemm_nt(a.data(), rows_a, b.data(), rows_b, dim, out_ref.data());
          avx->gemm_nt(a.data(), rows_a, b.data(), rows_b, dim, out_avx.data());
          for (std::size_t k = 0; k < out_ref.size(); ++k) {
            CHECK(std::abs(out_ref[k] - out_avx[k]) <= 1e-14 * static_cast<double>(dim));
          }
        }
      }
    }
  }

  SUBCASE("axpy is elementwise, so bitwise up to FMA contraction") {
    for (std::size_t n = 0; n <= 37; ++n) {
      const auto x = draw(rng, n);
      auto y1 = draw(rng, n);
      auto y2 = y1;
      ref.axpy(0.37, x.data(), y1.data(), n);
      avx->axpy(0.37, x.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 4e-16);
    }
  }

  SUBCASE("zero_predict decisions do not depend on the ISA") {
    IsaGuard guard;
    ZeroConfig cfg;
    for (int t = 0; t < 50; ++t) {
      const auto img = random_unit_rows(rng, 64, 48);
      const auto txt = random_unit_rows(rng, 20, 48);
      simd::set_isa(simd::Isa::Scalar);
      const auto a = zero_predict(img, txt, cfg);
      simd::set_isa(simd::Isa::Avx2);
      const auto b = zero_predict(img, txt, cfg);
      CHECK(a.predicted_class == b.predicted_class);
      CHECK(a.vote_counts == b.vote_counts);
      CHECK(a.filter_mask.order == b.filter_mask.order);
    }
  }
}

TEST_CASE("isa selection") {
  IsaGuard guard;
  CHECK(simd::set_isa(simd::Isa::Scalar));
  CHECK(simd::active_isa() == simd::Isa::Scalar);
  CHECK(simd::isa_name(simd::Isa::Avx2) == "avx2");
  CHECK(simd::set_isa(simd::Isa::Avx2) == (simd::detected_isa() == simd::Isa::Avx2));
}
