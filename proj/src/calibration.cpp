#include "zero_tta/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "zero_tta/core_math.hpp"

namespace zero_tta {

std::size_t ReliabilityBins::occupied() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(bins.begin(), bins.end(), [](const ReliabilityBin& b) { return b.count > 0; }));
}

ReliabilityBins reliability_bins(std::span<const double> confidences, const std::vector<bool>& correct,
                                 std::size_t m_bins) {
  if (m_bins < 1) throw DomainError("reliability_bins: need at least one bin");
  if (confidences.empty()) throw DomainError("reliability_bins: empty input");
  if (confidences.size() != correct.size()) throw ShapeError("reliability_bins: length mismatch");

  ReliabilityBins out;
  out.total = confidences.size();
  out.bins.resize(m_bins);
  const double m = static_cast<double>(m_bins);
  for (std::size_t b = 0; b < m_bins; ++b) {
    out.bins[b].lower = static_cast<double>(b) / m;
    out.bins[b].upper = static_cast<double>(b + 1) / m;
  }
  std::vector<double> hits(m_bins, 0.0);
  std::vector<double> conf_sum(m_bins, 0.0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double s = confidences[i];
    if (!(s >= 0.0 && s <= 1.0)) {
      throw DomainError("reliability_bins: confidence " + std::to_string(s) + " outside [0, 1]");
    }
    const auto b = std::min(static_cast<std::size_t>(std::floor(s * m)), m_bins - 1);
    ++out.bins[b].count;
    hits[b] += correct[i] ? 1.0 : 0.0;
    conf_sum[b] += s;
  }
  for (std::size_t b = 0; b < m_bins; ++b) {
    if (out.bins[b].count == 0) continue;
    const double n = static_cast<double>(out.bins[b].count);
    out.bins[b].accuracy = hits[b] / n;
    out.bins[b].confidence = conf_sum[b] / n;
  }
  return out;
}

double expected_calibration_error(const ReliabilityBins& bins, EceMode mode) {
  const std::size_t occupied = bins.occupied();
  if (occupied == 0) throw DomainError("expected_calibration_error: no occupied bins");
  double ece = 0.0;
  for (const auto& b : bins.bins) {
    if (b.count == 0) continue;
    const double gap = std::abs(b.accuracy - b.confidence);
    ece += mode == EceMode::PaperUnweighted ? gap
                                            : gap * static_cast<double>(b.count) / static_cast<double>(bins.total);
  }
  return mode == EceMode::PaperUnweighted ? ece / static_cast<double>(occupied) : ece;
}

CalibrationReport calibration_report(std::span<const double> confidences, const std::vector<bool>& correct,
                                     std::size_t m_bins) {
  CalibrationReport r;
  r.bins = reliability_bins(confidences, correct, m_bins);
  r.ece_unweighted = expected_calibration_error(r.bins, EceMode::PaperUnweighted);
  r.ece_weighted = expected_calibration_error(r.bins, EceMode::CountWeighted);
  std::size_t over = 0;
  for (const auto& b : r.bins.bins) {
    if (b.count > 0 && b.confidence > b.accuracy) ++over;
  }
  r.overconfident_bin_fraction = static_cast<double>(over) / static_cast<double>(r.bins.occupied());
  r.top1_accuracy = static_cast<double>(std::count(correct.begin(), correct.end(), true)) /
                    static_cast<double>(correct.size());
  return r;
}

CalibrationReport calibration_report(const ProbabilityMatrix& probs, std::span<const std::size_t> labels,
                                     std::size_t m_bins) {
  if (labels.size() != probs.rows()) throw ShapeError("calibration_report: one label per row required");
  std::vector<double> conf(probs.rows());
  std::vector<bool> correct(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto r = probs.row(i);
    const std::size_t pred = argmax(r);
    conf[i] = r[pred];
    correct[i] = pred == labels[i];
  }
  return calibration_report(conf, correct, m_bins);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman_rank_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman_rank_correlation: length mismatch");
  if (x.size() < 2) throw DomainError("spearman_rank_correlation: need at least two points");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("spearman_rank_correlation: undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

ErrorGapReport error_gap_report(std::span<const double> zeroshot_acc, std::span<const double> augmented_acc,
                                std::span<const double> zero_acc) {
  if (zeroshot_acc.size() != augmented_acc.size() || zeroshot_acc.size() != zero_acc.size()) {
    throw ShapeError("error_gap_report: dataset columns differ in length");
  }
  ErrorGapReport r;
  std::vector<double> gaps, improvements;
  for (std::size_t i = 0; i < zeroshot_acc.size(); ++i) {
    GapRow row{zeroshot_acc[i] - augmented_acc[i], zero_acc[i] - zeroshot_acc[i]};
    gaps.push_back(row.gap);
    improvements.push_back(row.improvement);
    r.rows.push_back(row);
  }
  if (gaps.size() >= 2) {
    try {
      r.spearman = spearman_rank_correlation(gaps, improvements);
    } catch (const DomainError&) {
      r.spearman.reset();
    }
  }
  return r;
}

}  // namespace zero_tta
