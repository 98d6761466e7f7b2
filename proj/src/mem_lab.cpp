#include "zero_tta/mem_lab.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <string>
#include <thread>

#include "zero_tta/calibration.hpp"
#include "zero_tta/simd.hpp"

namespace zero_tta {

void ToyDims::validate() const {
  if (n_views < 1 || classes < 2 || dim < 1 || ctx_dim < 1 || n_ctx < 1 || token_dim < 1) {
    throw DomainError("toy dimensions must be positive and classes >= 2");
  }
  if (input_dim() > dim) {
    throw DomainError("projection cannot have full column rank: n_ctx * ctx_dim + token_dim = " +
                      std::to_string(input_dim()) + " exceeds embedding dim " + std::to_string(dim));
  }
}

void MemConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("learning rate must be finite and >= 0");
  FilterConfig{gamma, tau}.validate();
}

std::size_t column_rank(const Matrix& m, double relative_tolerance) {
  std::vector<std::vector<double>> basis;
  double scale = 0.0;
  for (double v : m.data()) scale = std::max(scale, std::abs(v));
  const double tol = relative_tolerance * std::max(scale, 1.0) * static_cast<double>(std::max(m.rows(), m.cols()));
  for (std::size_t j = 0; j < m.cols(); ++j) {
    std::vector<double> col(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) col[i] = m(i, j);
    for (const auto& q : basis) {
      const double proj = std::inner_product(col.begin(), col.end(), q.begin(), 0.0);
      for (std::size_t i = 0; i < col.size(); ++i) col[i] -= proj * q[i];
    }
    const double norm = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
    if (norm > tol) {
      for (double& v : col) v /= norm;
      basis.push_back(std::move(col));
    }
  }
  return basis.size();
}

ToyEncoder::ToyEncoder(Matrix projection, Matrix class_tokens, std::size_t n_ctx, std::size_t ctx_dim)
    : projection_(std::move(projection)), class_tokens_(std::move(class_tokens)), n_ctx_(n_ctx), ctx_dim_(ctx_dim) {
  if (projection_.cols() != n_ctx_ * ctx_dim_ + class_tokens_.cols()) {
    throw ShapeError("toy encoder: projection width must equal n_ctx * ctx_dim + token_dim");
  }
  if (class_tokens_.rows() == 0) throw DomainError("toy encoder: no classes");
}

ToyEncoder ToyEncoder::random(const ToyDims& dims, Rng& rng) {
  dims.validate();
  Matrix w(dims.dim, dims.input_dim());
  for (int attempt = 0;; ++attempt) {
    for (double& v : w.data()) v = standard_normal(rng);
    if (column_rank(w) == w.cols()) break;
    if (attempt > 100) throw DomainError("toy encoder: could not draw a full-rank projection");
  }
  Matrix tokens(dims.classes, dims.token_dim);
  for (double& v : tokens.data()) v = standard_normal(rng);
  return ToyEncoder(std::move(w), std::move(tokens), dims.n_ctx, dims.ctx_dim);
}

namespace {

void check_ctx(const ToyEncoder& enc, const ContextVectors& ctx) {
  if (ctx.n_ctx != enc.n_ctx() || ctx.ctx_dim != enc.ctx_dim() || ctx.values.size() != ctx.n_ctx * ctx.ctx_dim) {
    throw ShapeError("context vectors do not match the encoder");
  }
  for (double v : ctx.values) {
    if (!std::isfinite(v)) throw DomainError("context vectors must be finite");
  }
}

// Pre-normalization text vectors u_c = W [ctx; t_c], C x D.
Matrix projected_text(const ToyEncoder& enc, const ContextVectors& ctx) {
  check_ctx(enc, ctx);
  const auto& w = enc.projection();
  const auto& tokens = enc.class_tokens();
  const std::size_t in = w.cols();
  const auto& k = simd::active_kernels();
  Matrix u(enc.classes(), enc.dim());
  std::vector<double> x(in);
  std::copy(ctx.values.begin(), ctx.values.end(), x.begin());
  for (std::size_t c = 0; c < enc.classes(); ++c) {
    const auto t = tokens.row(c);
    std::copy(t.begin(), t.end(), x.begin() + static_cast<std::ptrdiff_t>(ctx.size()));
    for (std::size_t d = 0; d < enc.dim(); ++d) u(c, d) = k.dot(w.row(d).data(), x.data(), in);
  }
  return u;
}

}  // namespace

EmbeddingMatrix toy_text_embeddings(const ToyEncoder& enc, const ContextVectors& ctx) {
  Matrix u = projected_text(enc, ctx);
  for (std::size_t c = 0; c < u.rows(); ++c) {
    auto r = u.row(c);
    const double norm = std::sqrt(simd::dot(r, r));
    if (norm < 1e-9) throw DomainError("toy text embedding for class " + std::to_string(c) + " has zero norm");
    for (double& v : r) v /= norm;
  }
  return EmbeddingMatrix(std::move(u));
}

FilterMask mem_filter(const EmbeddingMatrix& image_embs, const ToyEncoder& enc, const ContextVectors& ctx,
                      const MemConfig& cfg) {
  cfg.validate();
  const auto probs = softmax_rows(cosine_logits(image_embs, toy_text_embeddings(enc, ctx)), cfg.tau);
  return confidence_filter(probs, cfg.gamma);
}

ProbabilityVector mem_marginal(const EmbeddingMatrix& image_embs, const ToyEncoder& enc, const ContextVectors& ctx,
                               Temperature tau, const FilterMask& mask) {
  const auto probs = softmax_rows(cosine_logits(image_embs, toy_text_embeddings(enc, ctx)), tau);
  return marginal_distribution(probs, mask.kept);
}

double mem_loss(const EmbeddingMatrix& image_embs, const ToyEncoder& enc, const ContextVectors& ctx,
                const MemConfig& cfg, const FilterMask& mask) {
  return entropy(mem_marginal(image_embs, enc, ctx, cfg.tau, mask));
}

double mem_loss(const EmbeddingMatrix& image_embs, const ToyEncoder& enc, const ContextVectors& ctx,
                const MemConfig& cfg) {
  return mem_loss(image_embs, enc, ctx, cfg, mem_filter(image_embs, enc, ctx, cfg));
}

std::vector<double> mem_gradient(const EmbeddingMatrix& image_embs, const ToyEncoder& enc,
                                 const ContextVectors& ctx, const MemConfig& cfg, const FilterMask& mask) {
  cfg.validate();
  if (mask.kept.size() != image_embs.rows()) throw ShapeError("mem_gradient: mask does not match views");
  const std::size_t classes = enc.classes();
  const std::size_t dim = enc.dim();
  const double tau = cfg.tau.value();

  Matrix u = projected_text(enc, ctx);
  std::vector<double> norms(classes);
  Matrix z(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto r = u.row(c);
    norms[c] = std::sqrt(simd::dot(r, r));
    if (norms[c] < 1e-9) throw DomainError("toy text embedding for class " + std::to_string(c) + " has zero norm");
    for (std::size_t d = 0; d < dim; ++d) z(c, d) = r[d] / norms[c];
  }
  const EmbeddingMatrix text(z);
  const auto probs = softmax_rows(cosine_logits(image_embs, text), cfg.tau);
  const auto marginal = marginal_distribution(probs, mask.kept);
  const double kept = static_cast<double>(mask.kept_count());

  // dH/dp_bar_c = -(ln p_bar_c + 1); the constant drops out through the softmax.
  std::vector<double> log_marginal(classes);
  for (std::size_t c = 0; c < classes; ++c) log_marginal[c] = marginal[c] > 0.0 ? std::log(marginal[c]) : 0.0;

  // G_c = dH/dz_c = sum_i (dH/ds_ic / tau) z_i
  Matrix grad_z(classes, dim);
  for (std::size_t i = 0; i < image_embs.rows(); ++i) {
    if (!mask.kept[i]) continue;
    const auto p = probs.row(i);
    double mean_log = 0.0;
    for (std::size_t c = 0; c < classes; ++c) mean_log += p[c] * log_marginal[c];
    for (std::size_t c = 0; c < classes; ++c) {
      const double ds = -p[c] * (log_marginal[c] - mean_log) / kept;
      simd::axpy(ds / tau, image_embs.row(i), grad_z.row(c));
    }
  }

  // Back through normalization and the projection; only ctx columns are needed.
  const auto& w = enc.projection();
  std::vector<double> grad(ctx.size(), 0.0);
  std::vector<double> grad_u(dim);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto g = grad_z.row(c);
    const auto zc = z.row(c);
    const double radial = simd::dot(zc, g);
    for (std::size_t d = 0; d < dim; ++d) grad_u[d] = (g[d] - zc[d] * radial) / norms[c];
    for (std::size_t d = 0; d < dim; ++d) {
      simd::axpy(grad_u[d], w.row(d).first(ctx.size()), grad);
    }
  }
  return grad;
}

std::vector<double> mem_gradient(const EmbeddingMatrix& image_embs, const ToyEncoder& enc,
                                 const ContextVectors& ctx, const MemConfig& cfg) {
  return mem_gradient(image_embs, enc, ctx, cfg, mem_filter(image_embs, enc, ctx, cfg));
}

ContextVectors mem_step(const ContextVectors& ctx, const std::vector<double>& gradient, double lambda) {
  if (gradient.size() != ctx.values.size()) throw ShapeError("mem_step: gradient shape differs from context");
  ContextVectors out = ctx;
  for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] -= lambda * gradient[j];
  return out;
}

namespace {

ProbabilityVector class_probabilities(std::span<const double> z_img, const EmbeddingMatrix& text, Temperature tau) {
  std::vector<double> logits(text.rows());
  for (std::size_t c = 0; c < text.rows(); ++c) logits[c] = simd::dot(z_img, text.row(c));
  return softmax_temperature(logits, tau);
}

}  // namespace

double delta_g(std::size_t c, std::span<const double> z_img, const ToyEncoder& enc, const ContextVectors& ctx_pre,
               const ContextVectors& ctx_post, Temperature tau) {
  if (c >= enc.classes()) throw DomainError("delta_g: class out of range");
  const auto pre = class_probabilities(z_img, toy_text_embeddings(enc, ctx_pre), tau);
  const auto post = class_probabilities(z_img, toy_text_embeddings(enc, ctx_post), tau);
  return pre[c] - post[c];
}

ToyInstance random_toy_instance(std::uint64_t seed, const ToyDims& dims) {
  dims.validate();
  Rng rng(seed);
  Matrix images(dims.n_views, dims.dim);
  for (double& v : images.data()) v = standard_normal(rng);
  auto encoder = ToyEncoder::random(dims, rng);
  ContextVectors ctx{dims.n_ctx, dims.ctx_dim, std::vector<double>(dims.ctx_size())};
  for (double& v : ctx.values) v = standard_normal(rng);
  return {EmbeddingMatrix::normalized(std::move(images)), std::move(encoder), std::move(ctx)};
}

InvarianceRecord invariance_trial(std::uint64_t seed, const ToyDims& dims, const MemConfig& cfg) {
  cfg.validate();
  if (dims.n_views < 2) throw DomainError("invariance_trial: need at least two views");
  const ToyInstance inst = random_toy_instance(seed, dims);
  const FilterMask mask = mem_filter(inst.image_embs, inst.encoder, inst.ctx, cfg);
  const auto grad = mem_gradient(inst.image_embs, inst.encoder, inst.ctx, cfg, mask);
  const ContextVectors ctx_post = mem_step(inst.ctx, grad, cfg.lambda);

  const EmbeddingMatrix text_pre = toy_text_embeddings(inst.encoder, inst.ctx);
  const EmbeddingMatrix text_post = toy_text_embeddings(inst.encoder, ctx_post);

  InvarianceRecord rec;
  rec.marginal_pre.assign(dims.classes, 0.0);
  rec.marginal_post.assign(dims.classes, 0.0);
  rec.mean_delta_g.assign(dims.classes, 0.0);
  const double kept = static_cast<double>(mask.kept_count());
  for (std::size_t i : mask.order) {
    const auto pre = class_probabilities(inst.image_embs.row(i), text_pre, cfg.tau);
    const auto post = class_probabilities(inst.image_embs.row(i), text_post, cfg.tau);
    for (std::size_t c = 0; c < dims.classes; ++c) {
      rec.marginal_pre[c] += pre[c] / kept;
      rec.marginal_post[c] += post[c] / kept;
      rec.mean_delta_g[c] += (pre[c] - post[c]) / kept;
    }
  }
  rec.argmax_pre = argmax(rec.marginal_pre);
  rec.argmax_post = argmax(rec.marginal_post);
  rec.entropy_pre = entropy(rec.marginal_pre);
  rec.entropy_post = entropy(rec.marginal_post);
  rec.condition_lhs = rec.marginal_pre[rec.argmax_pre];
  rec.condition_rhs = rec.mean_delta_g[rec.argmax_pre];
  rec.condition_rhs_lambda = cfg.lambda * rec.condition_rhs;
  rec.condition_holds = rec.condition_lhs > rec.condition_rhs;
  rec.invariant = rec.argmax_pre == rec.argmax_post;
  return rec;
}

InvarianceSweep invariance_sweep(std::size_t trials, const ToyDims& dims, const MemConfig& cfg,
                                 std::size_t n_entropy_bins, std::uint64_t master_seed, unsigned threads) {
  if (n_entropy_bins < 1) throw DomainError("invariance_sweep: need at least one entropy bin");
  if (trials < n_entropy_bins) throw DomainError("invariance_sweep: fewer trials than entropy bins");
  dims.validate();
  cfg.validate();

  InvarianceSweep sweep;
  sweep.trials.resize(trials);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, trials));
  {
    std::vector<std::future<void>> workers;
    for (unsigned w = 0; w < threads; ++w) {
      workers.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t t = w; t < trials; t += threads) {
          const std::uint64_t seed = derive_seed(master_seed, t);
          sweep.trials[t] = {t, seed, invariance_trial(seed, dims, cfg)};
        }
      }));
    }
    for (auto& f : workers) f.get();
  }

  std::vector<std::size_t> order(trials);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sweep.trials[a].record.entropy_pre > sweep.trials[b].record.entropy_pre;
  });

  sweep.bins.resize(n_entropy_bins);
  std::size_t invariant_total = 0;
  for (std::size_t rank = 0; rank < trials; ++rank) {
    const auto& rec = sweep.trials[order[rank]].record;
    auto& bin = sweep.bins[rank * n_entropy_bins / trials];
    if (bin.trials == 0) bin.entropy_max = rec.entropy_pre;
    bin.entropy_min = rec.entropy_pre;
    ++bin.trials;
    if (rec.invariant) {
      ++bin.invariant;
      ++invariant_total;
    }
  }
  std::vector<double> index, ratio;
  for (std::size_t b = 0; b < n_entropy_bins; ++b) {
    auto& bin = sweep.bins[b];
    bin.ratio = static_cast<double>(bin.invariant) / static_cast<double>(bin.trials);
    index.push_back(static_cast<double>(b));
    ratio.push_back(bin.ratio);
  }
  sweep.overall_ratio = static_cast<double>(invariant_total) / static_cast<double>(trials);
  if (n_entropy_bins >= 2) {
    try {
      sweep.trend_spearman = spearman_rank_correlation(index, ratio);
    } catch (const DomainError&) {
      sweep.trend_spearman.reset();
    }
  }
  return sweep;
}

}  // namespace zero_tta
