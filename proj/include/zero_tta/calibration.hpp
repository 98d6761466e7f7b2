#pragma once

// Reliability binning, expected calibration error, overconfidence detection,
// and rank correlation.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "zero_tta/matrix.hpp"

namespace zero_tta {

inline constexpr std::size_t kDefaultBins = 20;

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;    ///< acc(B_m); 0 when empty
  double confidence = 0.0;  ///< conf(B_m); 0 when empty
};

struct ReliabilityBins {
  std::vector<ReliabilityBin> bins;
  std::size_t total = 0;

  std::size_t occupied() const noexcept;
};

/// Equal-width bins over [0, 1]; confidence s goes to bin floor(s * M),
/// with s = 1 clamped into the last bin.
ReliabilityBins reliability_bins(std::span<const double> confidences, const std::vector<bool>& correct,
                                 std::size_t m_bins = kDefaultBins);

enum class EceMode {
  /// Mean of |acc - conf| over occupied bins.
  PaperUnweighted,
  /// Sum of (count / total) * |acc - conf|.
  CountWeighted,
};

double expected_calibration_error(const ReliabilityBins& bins, EceMode mode = EceMode::PaperUnweighted);

struct CalibrationReport {
  double ece_unweighted = 0.0;
  double ece_weighted = 0.0;
  /// Fraction of occupied bins with conf > acc.
  double overconfident_bin_fraction = 0.0;
  double top1_accuracy = 0.0;
  ReliabilityBins bins;
};

CalibrationReport calibration_report(std::span<const double> confidences, const std::vector<bool>& correct,
                                     std::size_t m_bins = kDefaultBins);

/// Confidence (max probability) and correctness (argmax == label) per row.
CalibrationReport calibration_report(const ProbabilityMatrix& probs, std::span<const std::size_t> labels,
                                     std::size_t m_bins = kDefaultBins);

/// Fractional ranks, 1-based; tied values share their average rank.
std::vector<double> fractional_ranks(std::span<const double> values);

/// Pearson correlation of fractional ranks. Throws DomainError on a constant
/// input or fewer than two points.
double spearman_rank_correlation(std::span<const double> x, std::span<const double> y);

struct GapRow {
  double gap = 0.0;          ///< zero-shot minus augmented accuracy
  double improvement = 0.0;  ///< ZERO minus zero-shot accuracy
};

struct ErrorGapReport {
  std::vector<GapRow> rows;
  /// Empty when either column is constant.
  std::optional<double> spearman;
};

/// Per dataset gap and improvement, plus their rank correlation.
ErrorGapReport error_gap_report(std::span<const double> zeroshot_acc, std::span<const double> augmented_acc,
                                std::span<const double> zero_acc);

}  // namespace zero_tta
