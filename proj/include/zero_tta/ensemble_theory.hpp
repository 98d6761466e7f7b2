#pragma once

// Error model of majority voting among N independent voters with per-voter
// error rate epsilon, its Monte-Carlo check, the triangle-inequality risk
// bound for marginalized predictions, and the same-label marginalization
// experiment.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "zero_tta/matrix.hpp"

namespace zero_tta {

struct EnsembleParams {
  std::int64_t n_voters = 1;
  double epsilon = 0.0;

  /// Throws DomainError unless n_voters >= 1 and epsilon in [0, 1].
  void validate() const;
};

/// P(exactly k of N voters are wrong) = C(N,k) eps^k (1-eps)^(N-k).
///
/// Evaluated with Loader's saddle-point expansion, accurate to a few ulps
/// for N in the tens of thousands.
double binomial_error_pmf(const EnsembleParams& params, std::int64_t k);

/// Probability that at least floor(N/2 + 1) voters are wrong.
double majority_error(const EnsembleParams& params);

/// Probability of an exact half split (N even, k = N/2); 0 for odd N.
double half_split_mass(const EnsembleParams& params);

struct CondorcetPoint {
  std::int64_t n_voters;
  double majority_error;
};

struct CondorcetProfile {
  std::vector<CondorcetPoint> points;
  /// epsilon < 0.5, so the jury theorem predicts a decreasing series.
  bool guarantee_applies = false;
  /// Observed: every step strictly decreased.
  bool strictly_decreasing = false;
};

/// Majority error over ascending odd voter counts.
CondorcetProfile condorcet_profile(double epsilon, const std::vector<std::int64_t>& odd_ns);

struct MonteCarloEstimate {
  /// Fraction of trials where a strict majority (>= floor(N/2+1)) was wrong.
  double estimate = 0.0;
  double standard_error = 0.0;
  /// Fraction of trials ending in an exact half split (even N only).
  double half_split_rate = 0.0;
  /// estimate + half_split_rate / 2: half splits resolved by a fair coin.
  double estimate_with_half_splits = 0.0;
  std::int64_t trials = 0;
};

/// Simulates Bernoulli voters. Trials are split into fixed-size partitions,
/// each with its own stream derived from (seed, partition), and may run in
/// parallel; the result depends only on (params, trials, seed).
MonteCarloEstimate monte_carlo_majority_error(const EnsembleParams& params, std::int64_t trials,
                                              std::uint64_t seed, unsigned threads = 0);

enum class RiskLoss { L1, L2Norm };

struct RiskBound {
  double lhs = 0.0;  ///< loss of the mean prediction
  double rhs = 0.0;  ///< mean of per-row losses
  bool holds = false;
};

/// Checks loss(onehot(label), mean row) <= mean loss(onehot(label), row).
RiskBound risk_bound_check(std::size_t label, const ProbabilityMatrix& probs, RiskLoss loss);

struct LabelGroup {
  std::size_t label = 0;
  /// One probability row per sample carrying this label.
  ProbabilityMatrix predictions;
};

struct LabelGroupEntry {
  std::size_t label = 0;
  double base_error = 0.0;      ///< fraction of samples with argmax != label
  double marginal_error = 0.0;  ///< 1 if argmax of the group mean != label
  std::size_t group_size = 0;
};

struct LabelGroupReport {
  std::vector<LabelGroupEntry> per_label;
  double mean_base_error = 0.0;
  double mean_marginal_error = 0.0;
};

LabelGroupReport label_group_marginal_error(const std::vector<LabelGroup>& groups);

}  // namespace zero_tta
