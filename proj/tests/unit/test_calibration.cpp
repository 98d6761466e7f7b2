#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "synthetic.hpp"
#include "zero_tta/calibration.hpp"

using namespace zero_tta;
using namespace zero_tta::testing;

namespace {

struct Samples {
  std::vector<double> conf;
  std::vector<bool> correct;
  void add(double c, std::size_t n, std::size_t right) {
    for (std::size_t i = 0; i < n; ++i) {
      conf.push_back(c);
      correct.push_back(i < right);
    }
  }
};

}  // namespace

TEST_CASE("reliability bins") {
  SUBCASE("all certain and right") {
    const std::vector<double> conf(5, 1.0);
    const auto b = reliability_bins(conf, std::vector<bool>(5, true), 10);
    CHECK(b.occupied() == 1);
    CHECK(b.bins[9].count == 5);
    CHECK(b.bins[9].accuracy == 1.0);
    CHECK(b.bins[9].confidence == 1.0);
  }
  SUBCASE("hand binning") {
    const auto b = reliability_bins(std::vector<double>(4, 0.95), {true, true, true, false}, 10);
    CHECK(b.bins[9].count == 4);
    CHECK(b.bins[9].accuracy == 0.75);
    CHECK(b.bins[9].confidence == doctest::Approx(0.95).epsilon(1e-15));
  }
  SUBCASE("one bin is the global summary") {
    const auto b = reliability_bins(std::vector<double>{0.2, 0.6, 0.9}, {false, true, true}, 1);
    CHECK(b.bins.size() == 1);
    CHECK(b.bins[0].accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(b.bins[0].confidence == doctest::Approx(1.7 / 3.0));
  }
  SUBCASE("edges go to the upper bin; one goes to the last") {
    const auto b = reliability_bins(std::vector<double>{0.0, 0.5, 1.0}, {true, true, true}, 4);
    CHECK(b.bins[0].count == 1);
    CHECK(b.bins[2].count == 1);
    CHECK(b.bins[3].count == 1);
    for (std::size_t i = 1; i < b.bins.size(); ++i) CHECK(b.bins[i].lower > b.bins[i - 1].lower);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(reliability_bins({}, {}, 10), DomainError);
    CHECK_THROWS_AS(reliability_bins(std::vector<double>{0.5}, {true}, 0), DomainError);
    CHECK_THROWS_AS(reliability_bins(std::vector<double>{1.5}, {true}, 10), DomainError);
    CHECK_THROWS_AS(reliability_bins(std::vector<double>{0.5, 0.4}, {true}, 10), ShapeError);
  }
}

TEST_CASE("expected calibration error") {
  SUBCASE("single occupied bin") {
    const auto b = reliability_bins(std::vector<double>(4, 0.95), {true, true, true, false}, 20);
    CHECK(std::abs(expected_calibration_error(b, EceMode::PaperUnweighted) - 0.20) < 1e-12);
    CHECK(std::abs(expected_calibration_error(b, EceMode::CountWeighted) - 0.20) < 1e-12);
  }
  SUBCASE("two bins, gaps 0.1 and 0.3 with counts 10 and 30") {
    Samples s;
    s.add(0.5, 10, 6);
    s.add(0.9, 30, 18);
    const auto b = reliability_bins(s.conf, s.correct, 10);
    CHECK(std::abs(expected_calibration_error(b, EceMode::PaperUnweighted) - 0.20) < 1e-12);
    CHECK(std::abs(expected_calibration_error(b, EceMode::CountWeighted) - 0.25) < 1e-12);
  }
  SUBCASE("calibrated data") {
    Samples s;
    s.add(0.25, 8, 2);
    s.add(0.5, 10, 5);
    s.add(0.75, 4, 3);
    const auto b = reliability_bins(s.conf, s.correct, 20);
    CHECK(expected_calibration_error(b) < 1e-12);
    CHECK(expected_calibration_error(b, EceMode::CountWeighted) < 1e-12);
  }
  SUBCASE("equal counts make both modes agree; order does not matter") {
    Samples s;
    s.add(0.3, 5, 4);
    s.add(0.65, 5, 1);
    s.add(0.92, 5, 5);
    const auto b = reliability_bins(s.conf, s.correct, 20);
    CHECK(expected_calibration_error(b) ==
          doctest::Approx(expected_calibration_error(b, EceMode::CountWeighted)).epsilon(1e-14));
    auto conf = s.conf;
    auto correct = s.correct;
    std::reverse(conf.begin(), conf.end());
    std::reverse(correct.begin(), correct.end());
    CHECK(expected_calibration_error(reliability_bins(conf, correct, 20)) ==
          doctest::Approx(expected_calibration_error(b)).epsilon(1e-14));
  }
}

TEST_CASE("overconfidence is detected") {
  Rng rng(4);
  Samples s;
  for (int b = 0; b < 8; ++b) {
    const double acc = 0.1 * b + 0.05;
    const double delta = 0.01 + 0.03 * uniform01(rng);
    s.add(acc + delta, 20, static_cast<std::size_t>(std::lround(acc * 20)));
  }
  const auto r = calibration_report(s.conf, s.correct, 20);
  CHECK(r.overconfident_bin_fraction == 1.0);
  CHECK(r.ece_weighted > 0.0);
}

TEST_CASE("calibration report from probabilities") {
  const auto probs = Matrix::from_rows({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}});
  const std::vector<std::size_t> labels{0, 0, 0};
  const auto r = calibration_report(probs, labels, 10);
  CHECK(r.top1_accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(r.bins.total == 3);
}

TEST_CASE("spearman") {
  CHECK(fractional_ranks(std::vector<double>{10, 20, 20, 30}) == std::vector<double>{1, 2.5, 2.5, 4});
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(spearman_rank_correlation(x, std::vector<double>{2, 4, 8, 16, 32}) == doctest::Approx(1.0));
  CHECK(spearman_rank_correlation(x, std::vector<double>{9, 7, 5, 3, 1}) == doctest::Approx(-1.0));
  const std::vector<double> y{0.3, -1.0, 2.0, 0.5, 0.1};
  std::vector<double> ty;
  for (double v : y) ty.push_back(std::exp(3 * v));
  CHECK(spearman_rank_correlation(x, y) == doctest::Approx(spearman_rank_correlation(x, ty)).epsilon(1e-15));
  CHECK_THROWS_AS(spearman_rank_correlation(x, std::vector<double>(5, 1.0)), DomainError);
  CHECK_THROWS_AS(spearman_rank_correlation(std::vector<double>{1}, std::vector<double>{1}), DomainError);
  CHECK_THROWS_AS(spearman_rank_correlation(x, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("error gap report") {
  const std::vector<double> zs{67.44}, aug{66.19}, zero{67.07};
  const auto r = error_gap_report(zs, aug, zero);
  CHECK(r.rows[0].gap == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(r.rows[0].improvement == doctest::Approx(-0.37).epsilon(1e-12));
  CHECK_FALSE(r.spearman.has_value());

  const std::vector<double> same{50, 60, 70};
  const auto flat = error_gap_report(same, same, same);
  for (const auto& row : flat.rows) {
    CHECK(row.gap == 0.0);
    CHECK(row.improvement == 0.0);
  }
  CHECK_FALSE(flat.spearman.has_value());

  const auto anti = error_gap_report(std::vector<double>{50, 50}, std::vector<double>{49, 48},
                                     std::vector<double>{53, 51});
  REQUIRE(anti.spearman.has_value());
  CHECK(*anti.spearman == doctest::Approx(-1.0));
  CHECK_THROWS_AS(error_gap_report(same, std::vector<double>{1}, same), ShapeError);
}
