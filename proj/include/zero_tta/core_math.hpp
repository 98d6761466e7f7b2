#pragma once

// Numeric building blocks: cosine logits, temperature softmax and its
// zero-temperature limit, entropy, marginalization over views, and prompt
// template ensembling. All functions are pure and thread-safe.

#include <cstddef>
#include <span>
#include <vector>

#include "zero_tta/matrix.hpp"

namespace zero_tta {

/// Softmax temperature. Either a positive number or the tau -> 0+ limit.
class Temperature {
 public:
  /// Throws DomainError unless tau is finite and > 0.
  explicit Temperature(double tau);
  static Temperature zero_limit() noexcept { return Temperature(); }

  bool is_zero_limit() const noexcept { return zero_limit_; }
  /// Numeric value; 0 for the zero limit.
  double value() const noexcept { return tau_; }

 private:
  Temperature() noexcept : tau_(0.0), zero_limit_(true) {}
  double tau_;
  bool zero_limit_ = false;
};

/// Entry (i, c) is the dot product of image row i and text row c.
LogitMatrix cosine_logits(const EmbeddingMatrix& image_embs, const EmbeddingMatrix& text_embs);

/// softmax(logits / tau), max-subtracted. Delegates to zero_temperature_limit
/// when `tau` is the zero limit.
ProbabilityVector softmax_temperature(std::span<const double> logits, Temperature tau);

/// Row-wise softmax_temperature.
ProbabilityMatrix softmax_rows(const LogitMatrix& logits, Temperature tau);

/// Exact tau -> 0+ limit of the softmax: mass 1/m on each of the m entries
/// that are bitwise equal to the maximum.
ProbabilityVector zero_temperature_limit(std::span<const double> logits);

/// Precision used to emulate the machine-epsilon trick
/// `(l / finfo.eps).softmax` as written in PyTorch.
enum class EpsPrecision { Float32, Float64 };

/// softmax(logits / eps) evaluated in the given precision, eps being that
/// type's machine epsilon.
ProbabilityVector softmax_machine_epsilon(std::span<const double> logits, EpsPrecision precision);

/// Shannon entropy in nats with 0 ln 0 = 0.
double entropy(std::span<const double> p);

/// Mean of the rows selected by `mask`. Throws DomainError on an empty mask.
ProbabilityVector marginal_distribution(const ProbabilityMatrix& probs, const std::vector<bool>& mask);

/// Per class, the mean over templates re-normalized to unit length.
EmbeddingMatrix ensemble_text_embeddings(std::span<const EmbeddingMatrix> per_template);

/// Indices whose value is bitwise equal to the maximum, ascending.
std::vector<std::size_t> argmax_set(std::span<const double> values);

/// Lowest index attaining the maximum.
std::size_t argmax(std::span<const double> values);

}  // namespace zero_tta
