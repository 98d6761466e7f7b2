#include "zero_tta/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "zero_tta/simd.hpp"

namespace zero_tta {
namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite value");
  }
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(Matrix m, double norm_tolerance) : m_(std::move(m)) {
  require_finite(m_.data(), "embedding matrix");
  const auto& k = simd::active_kernels();
  for (std::size_t i = 0; i < m_.rows(); ++i) {
    auto r = m_.row(i);
    const double norm = std::sqrt(k.dot(r.data(), r.data(), r.size()));
    if (std::abs(norm - 1.0) > norm_tolerance) {
      throw DomainError("embedding row " + std::to_string(i) + " has L2 norm " +
                        std::to_string(norm) + ", expected 1");
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::normalized(Matrix m) {
  require_finite(m.data(), "embedding matrix");
  const auto& k = simd::active_kernels();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const double norm = std::sqrt(k.dot(r.data(), r.data(), r.size()));
    if (!(norm > 0.0)) throw DomainError("cannot normalize a zero-norm row");
    for (double& v : r) v /= norm;
  }
  return EmbeddingMatrix(std::move(m));
}

EmbeddingMatrix EmbeddingMatrix::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows()) throw ShapeError("row slice out of range");
  auto src = m_.data().subspan(first * dim(), count * dim());
  EmbeddingMatrix out;
  out.m_ = Matrix(count, dim(), std::vector<double>(src.begin(), src.end()));
  return out;
}

Temperature::Temperature(double tau) : tau_(tau) {
  if (!std::isfinite(tau) || tau <= 0.0) {
    throw DomainError("temperature must be finite and > 0, got " + std::to_string(tau));
  }
}

LogitMatrix cosine_logits(const EmbeddingMatrix& image_embs, const EmbeddingMatrix& text_embs) {
  if (image_embs.dim() != text_embs.dim()) {
    throw ShapeError("cosine_logits: embedding dimensions differ (" +
                     std::to_string(image_embs.dim()) + " vs " + std::to_string(text_embs.dim()) + ")");
  }
  LogitMatrix out(image_embs.rows(), text_embs.rows());
  simd::active_kernels().gemm_nt(image_embs.matrix().data().data(), image_embs.rows(),
                                 text_embs.matrix().data().data(), text_embs.rows(),
                                 image_embs.dim(), out.data().data());
  return out;
}

ProbabilityVector softmax_temperature(std::span<const double> logits, Temperature tau) {
  require_finite(logits, "softmax");
  if (tau.is_zero_limit()) return zero_temperature_limit(logits);
  if (logits.empty()) return {};
  const double inv_tau = 1.0 / tau.value();
  const double max = *std::max_element(logits.begin(), logits.end());
  ProbabilityVector out(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp((logits[c] - max) * inv_tau);
    sum += out[c];
  }
  for (double& p : out) p /= sum;
  return out;
}

ProbabilityMatrix softmax_rows(const LogitMatrix& logits, Temperature tau) {
  ProbabilityMatrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto p = softmax_temperature(logits.row(i), tau);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

ProbabilityVector zero_temperature_limit(std::span<const double> logits) {
  require_finite(logits, "zero_temperature_limit");
  ProbabilityVector out(logits.size(), 0.0);
  if (logits.empty()) return out;
  const auto winners = argmax_set(logits);
  const double mass = 1.0 / static_cast<double>(winners.size());
  for (std::size_t c : winners) out[c] = mass;
  return out;
}

namespace {

template <class Real>
ProbabilityVector softmax_eps_impl(std::span<const double> logits) {
  const Real eps = std::numeric_limits<Real>::epsilon();
  std::vector<Real> scaled(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    scaled[c] = static_cast<Real>(logits[c]) / eps;
  }
  const Real max = *std::max_element(scaled.begin(), scaled.end());
  Real sum = 0;
  for (Real& v : scaled) {
    v = std::exp(v - max);
    sum += v;
  }
  ProbabilityVector out(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] = static_cast<double>(scaled[c] / sum);
  return out;
}

}  // namespace

ProbabilityVector softmax_machine_epsilon(std::span<const double> logits, EpsPrecision precision) {
  require_finite(logits, "softmax_machine_epsilon");
  if (logits.empty()) return {};
  return precision == EpsPrecision::Float32 ? softmax_eps_impl<float>(logits)
                                            : softmax_eps_impl<double>(logits);
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

ProbabilityVector marginal_distribution(const ProbabilityMatrix& probs, const std::vector<bool>& mask) {
  if (mask.size() != probs.rows()) throw ShapeError("marginal_distribution: mask length differs from row count");
  ProbabilityVector out(probs.cols(), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (!mask[i]) continue;
    auto r = probs.row(i);
    for (std::size_t c = 0; c < r.size(); ++c) out[c] += r[c];
    ++count;
  }
  if (count == 0) throw DomainError("marginal_distribution: empty mask");
  for (double& v : out) v /= static_cast<double>(count);
  return out;
}

EmbeddingMatrix ensemble_text_embeddings(std::span<const EmbeddingMatrix> per_template) {
  if (per_template.empty()) throw DomainError("ensemble_text_embeddings: no templates");
  const std::size_t classes = per_template.front().rows();
  const std::size_t dim = per_template.front().dim();
  Matrix mean(classes, dim);
  for (const auto& t : per_template) {
    if (t.rows() != classes || t.dim() != dim) {
      throw ShapeError("ensemble_text_embeddings: templates disagree on shape");
    }
    for (std::size_t i = 0; i < classes * dim; ++i) mean.data()[i] += t.matrix().data()[i];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    auto r = mean.row(c);
    for (double& v : r) v /= static_cast<double>(per_template.size());
    double norm = 0.0;
    for (double v : r) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      throw DomainError("ensemble_text_embeddings: class " + std::to_string(c) +
                        " has a zero-norm template mean");
    }
    for (double& v : r) v /= norm;
  }
  return EmbeddingMatrix(std::move(mean));
}

std::vector<std::size_t> argmax_set(std::span<const double> values) {
  std::vector<std::size_t> out;
  if (values.empty()) return out;
  const double max = *std::max_element(values.begin(), values.end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == max) out.push_back(i);
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw DomainError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace zero_tta
