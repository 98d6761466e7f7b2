#pragma once

// ZERO: keep the most confident views, send the softmax temperature to zero,
// marginalize. With the temperature at zero each view contributes a one-hot
// vote at its argmax, so the prediction is a vote over confident views.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "zero_tta/core_math.hpp"
#include "zero_tta/matrix.hpp"

namespace zero_tta {

enum class TieBreakStrategy {
  Greedy,
  MostConfidentProb,
  PerClassMarginalEntropy,
  MaxLogit,
  MeanLogit,
  MaxLogitPerView,
  Random,
};

inline constexpr TieBreakStrategy kAllTieBreakStrategies[] = {
    TieBreakStrategy::Greedy,   TieBreakStrategy::MostConfidentProb, TieBreakStrategy::PerClassMarginalEntropy,
    TieBreakStrategy::MaxLogit, TieBreakStrategy::MeanLogit,         TieBreakStrategy::MaxLogitPerView,
    TieBreakStrategy::Random,
};

std::string_view to_string(TieBreakStrategy s) noexcept;
std::optional<TieBreakStrategy> parse_tie_break(std::string_view name) noexcept;

inline constexpr double kDefaultGamma = 0.3;
inline constexpr double kDefaultTau = 0.01;

struct FilterConfig {
  double gamma = kDefaultGamma;
  Temperature tau{kDefaultTau};

  /// Throws DomainError unless 0 < gamma <= 1.
  void validate() const;
};

/// max(1, floor(gamma * n)).
std::size_t filter_keep_count(std::size_t n, double gamma);

struct FilterMask {
  std::vector<bool> kept;
  /// Kept indices, ascending by entropy (ties by index).
  std::vector<std::size_t> order;
  /// Every view index, ascending by entropy (ties by index); `order` is its prefix.
  std::vector<std::size_t> ranking;
  /// Per-view entropy in nats.
  std::vector<double> entropies;

  std::size_t kept_count() const noexcept { return order.size(); }
  friend bool operator==(const FilterMask&, const FilterMask&) = default;
};

/// Keeps the max(1, floor(gamma * N)) lowest-entropy rows of `probs`.
FilterMask confidence_filter(const ProbabilityMatrix& probs, double gamma);
FilterMask confidence_filter(const ProbabilityMatrix& probs, const FilterConfig& cfg);

/// Vote totals over the kept rows.
///
/// Rows with a unique argmax add 1 to `counts`. A row whose maximum is shared
/// by m classes adds 1/m to each of them in `fractional`.
struct VoteTally {
  std::vector<std::int64_t> counts;
  std::vector<double> fractional;
  std::size_t tied_rows = 0;

  std::vector<double> totals() const;
};

VoteTally vote_counts(const LogitMatrix& logits, const FilterMask& mask);

/// How the tau -> 0+ limit is evaluated inside zero_predict.
enum class ZeroLimitMode {
  Analytic,          ///< exact one-hot / uniform-over-ties
  MachineEpsilon32,  ///< softmax(l / FLT_EPSILON) in 32-bit, what `(l / finfo.eps).softmax` computes
  MachineEpsilon64,  ///< softmax(l / DBL_EPSILON) in 64-bit
};

struct ZeroConfig {
  /// Temperature for the pre-filter probabilities.
  Temperature tau{kDefaultTau};
  double gamma = kDefaultGamma;
  TieBreakStrategy strategy = TieBreakStrategy::Greedy;
  std::uint64_t seed = 0;
  ZeroLimitMode mode = ZeroLimitMode::Analytic;

  void validate() const;
};

struct ZeroResult {
  std::size_t predicted_class = 0;
  std::vector<std::int64_t> vote_counts;
  std::vector<double> fractional_votes;
  bool tie_occurred = false;
  std::vector<std::size_t> tied_classes;
  /// Greedy ran out of non-kept views and fell back to MostConfidentProb.
  bool tie_break_fallback = false;
  FilterMask filter_mask;
  /// Normalized sum of zero-temperature rows over the kept views.
  ProbabilityVector marginal;
};

/// Runs ZERO on one sample. `stream` keys the Random tie-break stream.
ZeroResult zero_predict(const EmbeddingMatrix& image_embs, const EmbeddingMatrix& text_embs,
                        const ZeroConfig& cfg, std::uint64_t stream = 0);

/// Same as zero_predict, starting from precomputed cosine logits (N x C).
ZeroResult zero_predict_logits(const LogitMatrix& logits, const ZeroConfig& cfg, std::uint64_t stream = 0);

struct TieBreakOutcome {
  std::size_t winner = 0;
  bool fell_back = false;
};

/// Chooses one class among `tied` (size >= 2).
///
/// `probs` are the pre-filter probabilities used to build `mask`.
TieBreakOutcome break_tie(const LogitMatrix& logits, const ProbabilityMatrix& probs, const FilterMask& mask,
                          std::span<const std::size_t> tied, TieBreakStrategy strategy, std::uint64_t seed);

}  // namespace zero_tta
