#pragma once

// Dataset-level evaluation of zero-shot classification against ZERO.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zero_tta/ensemble_theory.hpp"
#include "zero_tta/manifest.hpp"
#include "zero_tta/matrix.hpp"
#include "zero_tta/zero_kernel.hpp"

namespace zero_tta {

enum class Method { ZeroShot, Zero, ZeroEnsemble };

std::string_view to_string(Method m) noexcept;
std::optional<Method> parse_method(std::string_view name) noexcept;

struct ZeroShotPrediction {
  std::size_t predicted_class = 0;
  /// Several classes shared the top similarity; the lowest index was taken.
  bool tie = false;
};

/// Argmax of cosine similarity between one source embedding and each class.
ZeroShotPrediction zeroshot_predict(std::span<const double> source_emb, const EmbeddingMatrix& text_embs);

/// Text templates and per-sample view blocks, loaded and validated.
struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<EmbeddingMatrix> templates;
  /// One n_views x D block per manifest sample, in manifest order.
  std::vector<EmbeddingMatrix> views;
};

/// Reads every referenced file once. Throws on missing files, shape
/// disagreements, or blocks running past the end of their file.
LoadedDataset load_dataset(const DatasetManifest& manifest);

struct SamplePrediction {
  std::string sample_id;
  std::size_t label = 0;
  std::optional<std::size_t> zero_shot;
  std::optional<std::size_t> zero;
  std::optional<std::size_t> zero_ensemble;
  bool zero_shot_tie = false;
  bool zero_tie = false;
  bool zero_ensemble_tie = false;
  bool tie_break_fallback = false;
  std::size_t kept_views = 0;
  std::size_t tied_views = 0;
};

struct MethodAccuracy {
  Method method = Method::ZeroShot;
  std::size_t correct = 0;
  std::size_t total = 0;
  double top1 = 0.0;
};

struct EvaluationReport {
  std::string dataset;
  std::vector<Method> methods;
  double gamma = 0.0;
  double tau = 0.0;
  TieBreakStrategy strategy = TieBreakStrategy::Greedy;
  std::uint64_t seed = 0;
  std::size_t n_views = 0;
  std::size_t kept_per_sample = 0;
  std::vector<MethodAccuracy> accuracy;
  /// Manifest order.
  std::vector<SamplePrediction> samples;
  std::size_t zero_shot_ties = 0;
  std::size_t zero_ties = 0;
  std::size_t zero_ensemble_ties = 0;
  std::size_t tie_break_fallbacks = 0;
  std::size_t tied_views = 0;
};

/// Evaluates every sample. ZeroShot reads view 0 against the first template;
/// Zero runs over all views against the first template; ZeroEnsemble runs Zero
/// against the mean of all templates. The Random tie-break stream of a sample
/// is keyed by its sample_id, so results do not depend on manifest order or
/// thread count.
EvaluationReport evaluate_dataset(const LoadedDataset& data, std::span<const Method> methods, const ZeroConfig& cfg,
                                  unsigned threads = 0);
EvaluationReport evaluate_dataset(const DatasetManifest& manifest, std::span<const Method> methods,
                                  const ZeroConfig& cfg, unsigned threads = 0);

std::string report_to_json(const EvaluationReport& report);
/// One row per sample.
std::string report_to_csv(const EvaluationReport& report);

struct RiskSummary {
  std::size_t samples = 0;
  std::size_t holds_l1 = 0;
  std::size_t holds_l2 = 0;
  double mean_lhs_l1 = 0.0;
  double mean_rhs_l1 = 0.0;
  double mean_lhs_l2 = 0.0;
  double mean_rhs_l2 = 0.0;
};

/// Risk bound of the marginal over all views, per sample, first template.
RiskSummary risk_check_dataset(const LoadedDataset& data, Temperature tau);

}  // namespace zero_tta
