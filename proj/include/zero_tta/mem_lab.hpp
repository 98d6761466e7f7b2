#pragma once

// Desk-scale laboratory for marginal entropy minimization (MEM) over prompt
// context vectors.
//
// The frozen text encoder is replaced by z_c = normalize(W [ctx; t_c]) with a
// fixed random projection W, which keeps z_c smooth in ctx and makes the
// gradient of the marginal entropy available in closed form. One gradient
// step on ctx is then compared against the argmax of the marginal before and
// after the step.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "zero_tta/core_math.hpp"
#include "zero_tta/matrix.hpp"
#include "zero_tta/rng.hpp"
#include "zero_tta/zero_kernel.hpp"

namespace zero_tta {

struct ToyDims {
  std::size_t n_views = 16;
  std::size_t classes = 5;
  std::size_t dim = 16;
  std::size_t ctx_dim = 4;
  std::size_t n_ctx = 2;
  std::size_t token_dim = 4;

  std::size_t ctx_size() const noexcept { return ctx_dim * n_ctx; }
  std::size_t input_dim() const noexcept { return ctx_size() + token_dim; }
  /// Throws DomainError on zero sizes or when W cannot have full column rank.
  void validate() const;
};

/// Trainable prompt: n_ctx vectors of ctx_dim values, stored flat.
struct ContextVectors {
  std::size_t n_ctx = 0;
  std::size_t ctx_dim = 0;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const ContextVectors&, const ContextVectors&) = default;
};

class ToyEncoder {
 public:
  /// `projection` is D x (n_ctx * ctx_dim + token_dim); `class_tokens` is C x token_dim.
  ToyEncoder(Matrix projection, Matrix class_tokens, std::size_t n_ctx, std::size_t ctx_dim);

  /// Gaussian W and tokens, W redrawn until it has full column rank.
  static ToyEncoder random(const ToyDims& dims, Rng& rng);

  const Matrix& projection() const noexcept { return projection_; }
  const Matrix& class_tokens() const noexcept { return class_tokens_; }
  std::size_t classes() const noexcept { return class_tokens_.rows(); }
  std::size_t dim() const noexcept { return projection_.rows(); }
  std::size_t n_ctx() const noexcept { return n_ctx_; }
  std::size_t ctx_dim() const noexcept { return ctx_dim_; }

 private:
  Matrix projection_;
  Matrix class_tokens_;
  std::size_t n_ctx_;
  std::size_t ctx_dim_;
};

/// Numerical column rank by modified Gram-Schmidt.
std::size_t column_rank(const Matrix& m, double relative_tolerance = 1e-10);

/// Toy image and text embeddings are isotropic in D = 16, so cosine logits
/// spread over about +-0.5; at tau = 0.01 nearly every view saturates and the
/// gradient vanishes. 0.1 puts logits / tau in the range CLIP sees.
inline constexpr double kMemDefaultTau = 0.1;

struct MemConfig {
  double lambda = 0.1;
  Temperature tau{kMemDefaultTau};
  double gamma = kDefaultGamma;

  void validate() const;
};

/// Per class, normalize(W [ctx; t_c]). Throws DomainError if a pre-normalized
/// vector has norm below 1e-9.
EmbeddingMatrix toy_text_embeddings(const ToyEncoder& enc, const ContextVectors& ctx);

/// Confidence filter at ctx. Loss and gradient hold this mask fixed.
FilterMask mem_filter(const EmbeddingMatrix& image_embs, const ToyEncoder& enc, const ContextVectors& ctx,
                      const MemConfig& cfg);

/// Entropy of the marginal over the kept views.
double mem_loss(const EmbeddingMatrix& image_embs, const ToyEncoder& enc, const ContextVectors& ctx,
                const MemConfig& cfg, const FilterMask& mask);
double mem_loss(const EmbeddingMatrix& image_embs, const ToyEncoder& enc, const ContextVectors& ctx,
                const MemConfig& cfg);

/// Analytic d(mem_loss)/d(ctx), same layout as ctx.values.
std::vector<double> mem_gradient(const EmbeddingMatrix& image_embs, const ToyEncoder& enc,
                                 const ContextVectors& ctx, const MemConfig& cfg, const FilterMask& mask);
std::vector<double> mem_gradient(const EmbeddingMatrix& image_embs, const ToyEncoder& enc,
                                 const ContextVectors& ctx, const MemConfig& cfg);

/// ctx - lambda * gradient.
ContextVectors mem_step(const ContextVectors& ctx, const std::vector<double>& gradient, double lambda);

/// g(c | z_img, ctx_pre) - g(c | z_img, ctx_post), g being the class-c softmax
/// probability at temperature tau.
double delta_g(std::size_t c, std::span<const double> z_img, const ToyEncoder& enc, const ContextVectors& ctx_pre,
               const ContextVectors& ctx_post, Temperature tau);

/// Marginal over kept views at ctx.
ProbabilityVector mem_marginal(const EmbeddingMatrix& image_embs, const ToyEncoder& enc, const ContextVectors& ctx,
                               Temperature tau, const FilterMask& mask);

struct ToyInstance {
  EmbeddingMatrix image_embs;
  ToyEncoder encoder;
  ContextVectors ctx;
};

/// Isotropic unit image embeddings, Gaussian encoder and context, all from `seed`.
ToyInstance random_toy_instance(std::uint64_t seed, const ToyDims& dims);

struct InvarianceRecord {
  std::size_t argmax_pre = 0;
  std::size_t argmax_post = 0;
  double entropy_pre = 0.0;
  double entropy_post = 0.0;
  /// Marginal probability of the initial prediction, before the step.
  double condition_lhs = 0.0;
  /// Mean over kept views of delta_g(argmax_pre, z_i).
  double condition_rhs = 0.0;
  /// lambda * condition_rhs, the threshold scaled by the step size.
  double condition_rhs_lambda = 0.0;
  bool condition_holds = false;
  bool invariant = false;
  std::vector<double> marginal_pre;
  std::vector<double> marginal_post;
  /// Per class, mean over kept views of delta_g(c, z_i).
  std::vector<double> mean_delta_g;
};

/// Draws an instance from `seed`, applies one MEM step, and compares.
InvarianceRecord invariance_trial(std::uint64_t seed, const ToyDims& dims, const MemConfig& cfg);

struct EntropyBinStats {
  double entropy_max = 0.0;
  double entropy_min = 0.0;
  std::size_t trials = 0;
  std::size_t invariant = 0;
  double ratio = 0.0;
};

struct SweepTrial {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  InvarianceRecord record;
};

struct InvarianceSweep {
  std::vector<SweepTrial> trials;
  /// Ordered by descending pre-step entropy: bin 0 holds the most uncertain trials.
  std::vector<EntropyBinStats> bins;
  double overall_ratio = 0.0;
  /// Spearman between bin index and ratio; empty when the ratios are constant.
  std::optional<double> trend_spearman;
};

/// Runs `trials` independent trials (seeds derived from master_seed) and
/// buckets them into equal-count entropy bins.
InvarianceSweep invariance_sweep(std::size_t trials, const ToyDims& dims, const MemConfig& cfg,
                                 std::size_t n_entropy_bins, std::uint64_t master_seed, unsigned threads = 0);

}  // namespace zero_tta
