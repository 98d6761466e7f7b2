#include "zero_tta/zero_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "zero_tta/rng.hpp"

namespace zero_tta {

std::string_view to_string(TieBreakStrategy s) noexcept {
  switch (s) {
    case TieBreakStrategy::Greedy: return "greedy";
    case TieBreakStrategy::MostConfidentProb: return "most-confident-prob";
    case TieBreakStrategy::PerClassMarginalEntropy: return "per-class-marginal-entropy";
    case TieBreakStrategy::MaxLogit: return "max-logit";
    case TieBreakStrategy::MeanLogit: return "mean-logit";
    case TieBreakStrategy::MaxLogitPerView: return "max-logit-per-view";
    case TieBreakStrategy::Random: return "random";
  }
  return "unknown";
}

std::optional<TieBreakStrategy> parse_tie_break(std::string_view name) noexcept {
  for (auto s : kAllTieBreakStrategies) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

void FilterConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw DomainError("filter percentile gamma must lie in (0, 1], got " + std::to_string(gamma));
  }
}

void ZeroConfig::validate() const { FilterConfig{gamma, tau}.validate(); }

std::size_t filter_keep_count(std::size_t n, double gamma) {
  FilterConfig{gamma}.validate();
  // The 1e-9 nudge keeps decimal products such as 0.29 * 100 from flooring
  // one below their exact value.
  const auto k = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n, 1));
}

FilterMask confidence_filter(const ProbabilityMatrix& probs, double gamma) {
  const std::size_t n = probs.rows();
  if (n == 0) throw DomainError("confidence_filter: no views");
  const std::size_t k = filter_keep_count(n, gamma);

  FilterMask mask;
  mask.entropies.resize(n);
  for (std::size_t i = 0; i < n; ++i) mask.entropies[i] = entropy(probs.row(i));

  mask.ranking.resize(n);
  std::iota(mask.ranking.begin(), mask.ranking.end(), std::size_t{0});
  std::stable_sort(mask.ranking.begin(), mask.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return mask.entropies[a] < mask.entropies[b]; });

  mask.order.assign(mask.ranking.begin(), mask.ranking.begin() + static_cast<std::ptrdiff_t>(k));
  mask.kept.assign(n, false);
  for (std::size_t i : mask.order) mask.kept[i] = true;
  return mask;
}

FilterMask confidence_filter(const ProbabilityMatrix& probs, const FilterConfig& cfg) {
  cfg.validate();
  return confidence_filter(probs, cfg.gamma);
}

std::vector<double> VoteTally::totals() const {
  std::vector<double> out(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) out[c] = static_cast<double>(counts[c]) + fractional[c];
  return out;
}

VoteTally vote_counts(const LogitMatrix& logits, const FilterMask& mask) {
  if (mask.kept.size() != logits.rows()) throw ShapeError("vote_counts: mask does not match logit rows");
  VoteTally tally;
  tally.counts.assign(logits.cols(), 0);
  tally.fractional.assign(logits.cols(), 0.0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask.kept[i]) continue;
    const auto winners = argmax_set(logits.row(i));
    if (winners.size() == 1) {
      ++tally.counts[winners.front()];
    } else {
      ++tally.tied_rows;
      const double share = 1.0 / static_cast<double>(winners.size());
      for (std::size_t c : winners) tally.fractional[c] += share;
    }
  }
  return tally;
}

namespace {

bool intersects(const std::vector<std::size_t>& sorted_set, std::span<const std::size_t> tied) {
  return std::any_of(tied.begin(), tied.end(),
                     [&](std::size_t c) { return std::binary_search(sorted_set.begin(), sorted_set.end(), c); });
}

std::size_t first_shared(const std::vector<std::size_t>& sorted_set, std::span<const std::size_t> tied) {
  for (std::size_t c : sorted_set) {
    if (std::find(tied.begin(), tied.end(), c) != tied.end()) return c;
  }
  return tied.front();
}

// Pick the tied class of the kept view maximizing `score(view)`; earlier views
// in entropy order win score ties.
template <class Score>
std::size_t best_view_class(const LogitMatrix& logits, const FilterMask& mask,
                            std::span<const std::size_t> tied, Score score) {
  double best = -std::numeric_limits<double>::infinity();
  std::optional<std::size_t> winner;
  for (std::size_t i : mask.order) {
    const auto preds = argmax_set(logits.row(i));
    if (!intersects(preds, tied)) continue;
    const double s = score(i);
    if (!winner || s > best) {
      best = s;
      winner = first_shared(preds, tied);
    }
  }
  return winner.value_or(tied.front());
}

// Tied class with the largest `score(class)`; lowest class index wins ties.
template <class Score>
std::size_t best_class(std::span<const std::size_t> tied, Score score) {
  std::size_t winner = tied.front();
  double best = score(winner);
  for (std::size_t c : tied.subspan(1)) {
    const double s = score(c);
    if (s > best || (s == best && c < winner)) {
      best = s;
      winner = c;
    }
  }
  return winner;
}

}  // namespace

TieBreakOutcome break_tie(const LogitMatrix& logits, const ProbabilityMatrix& probs, const FilterMask& mask,
                          std::span<const std::size_t> tied_in, TieBreakStrategy strategy, std::uint64_t seed) {
  if (tied_in.empty()) throw DomainError("break_tie: empty tied set");
  std::vector<std::size_t> tied(tied_in.begin(), tied_in.end());
  std::sort(tied.begin(), tied.end());
  if (tied.size() == 1) return {tied.front(), false};

  switch (strategy) {
    case TieBreakStrategy::Greedy: {
      for (std::size_t r = mask.kept_count(); r < mask.ranking.size(); ++r) {
        const auto preds = argmax_set(logits.row(mask.ranking[r]));
        std::size_t hits = 0;
        std::size_t hit = 0;
        for (std::size_t c : preds) {
          if (std::binary_search(tied.begin(), tied.end(), c)) {
            ++hits;
            hit = c;
          }
        }
        if (hits == 1) return {hit, false};
      }
      auto fallback = break_tie(logits, probs, mask, tied, TieBreakStrategy::MostConfidentProb, seed);
      fallback.fell_back = true;
      return fallback;
    }
    case TieBreakStrategy::MostConfidentProb:
      return {best_view_class(logits, mask, tied, [&](std::size_t i) {
                auto r = probs.row(i);
                return *std::max_element(r.begin(), r.end());
              }),
              false};
    case TieBreakStrategy::MaxLogitPerView:
      return {best_view_class(logits, mask, tied, [&](std::size_t i) {
                auto r = logits.row(i);
                return *std::max_element(r.begin(), r.end());
              }),
              false};
    case TieBreakStrategy::PerClassMarginalEntropy: {
      // Lowest entropy wins, so score by negated entropy.
      return {best_class(tied,
                         [&](std::size_t c) {
                           std::vector<bool> sub(probs.rows(), false);
                           bool any = false;
                           for (std::size_t i : mask.order) {
                             const auto preds = argmax_set(logits.row(i));
                             if (std::binary_search(preds.begin(), preds.end(), c)) sub[i] = any = true;
                           }
                           if (!any) return -std::numeric_limits<double>::infinity();
                           return -entropy(marginal_distribution(probs, sub));
                         }),
              false};
    }
    case TieBreakStrategy::MaxLogit:
      return {best_class(tied,
                         [&](std::size_t c) {
                           double m = -std::numeric_limits<double>::infinity();
                           for (std::size_t i : mask.order) m = std::max(m, logits(i, c));
                           return m;
                         }),
              false};
    case TieBreakStrategy::MeanLogit:
      return {best_class(tied,
                         [&](std::size_t c) {
                           double s = 0.0;
                           for (std::size_t i : mask.order) s += logits(i, c);
                           return s / static_cast<double>(mask.kept_count());
                         }),
              false};
    case TieBreakStrategy::Random: {
      Rng rng(seed);
      return {tied[uniform_index(rng, tied.size())], false};
    }
  }
  throw DomainError("break_tie: unknown strategy");
}

ZeroResult zero_predict_logits(const LogitMatrix& logits, const ZeroConfig& cfg, std::uint64_t stream) {
  cfg.validate();
  if (logits.rows() == 0) throw DomainError("zero_predict: no views");
  if (logits.cols() == 0) throw DomainError("zero_predict: no classes");

  const ProbabilityMatrix probs = softmax_rows(logits, cfg.tau);
  ZeroResult result;
  result.filter_mask = confidence_filter(probs, cfg.gamma);
  const FilterMask& mask = result.filter_mask;

  VoteTally tally = vote_counts(logits, mask);
  result.vote_counts = std::move(tally.counts);
  result.fractional_votes = std::move(tally.fractional);

  const std::size_t classes = logits.cols();
  std::vector<double> summed(classes, 0.0);
  switch (cfg.mode) {
    case ZeroLimitMode::Analytic:
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (!mask.kept[i]) continue;
        const auto p = zero_temperature_limit(logits.row(i));
        for (std::size_t c = 0; c < classes; ++c) summed[c] += p[c];
      }
      break;
    case ZeroLimitMode::MachineEpsilon32: {
      std::vector<float> acc(classes, 0.0f);
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (!mask.kept[i]) continue;
        const auto p = softmax_machine_epsilon(logits.row(i), EpsPrecision::Float32);
        for (std::size_t c = 0; c < classes; ++c) acc[c] += static_cast<float>(p[c]);
      }
      std::copy(acc.begin(), acc.end(), summed.begin());
      break;
    }
    case ZeroLimitMode::MachineEpsilon64:
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (!mask.kept[i]) continue;
        const auto p = softmax_machine_epsilon(logits.row(i), EpsPrecision::Float64);
        for (std::size_t c = 0; c < classes; ++c) summed[c] += p[c];
      }
      break;
  }

  result.marginal.resize(classes);
  const double kept = static_cast<double>(mask.kept_count());
  for (std::size_t c = 0; c < classes; ++c) result.marginal[c] = summed[c] / kept;

  const auto winners = argmax_set(summed);
  if (winners.size() == 1) {
    result.predicted_class = winners.front();
  } else {
    result.tie_occurred = true;
    result.tied_classes = winners;
    const auto outcome = break_tie(logits, probs, mask, winners, cfg.strategy, derive_seed(cfg.seed, stream));
    result.predicted_class = outcome.winner;
    result.tie_break_fallback = outcome.fell_back;
  }
  return result;
}

ZeroResult zero_predict(const EmbeddingMatrix& image_embs, const EmbeddingMatrix& text_embs, const ZeroConfig& cfg,
                        std::uint64_t stream) {
  return zero_predict_logits(cosine_logits(image_embs, text_embs), cfg, stream);
}

}  // namespace zero_tta
