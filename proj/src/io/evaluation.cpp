#include "zero_tta/evaluation.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "zero_tta/core_math.hpp"
#include "zero_tta/rng.hpp"
#include "zero_tta/zteb.hpp"

namespace zero_tta {

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::ZeroShot: return "zero_shot";
    case Method::Zero: return "zero";
    case Method::ZeroEnsemble: return "zero_ensemble";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) noexcept {
  for (auto m : {Method::ZeroShot, Method::Zero, Method::ZeroEnsemble}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

ZeroShotPrediction zeroshot_predict(std::span<const double> source_emb, const EmbeddingMatrix& text_embs) {
  if (source_emb.size() != text_embs.dim()) throw ShapeError("zeroshot_predict: embedding dimensions differ");
  if (text_embs.rows() == 0) throw DomainError("zeroshot_predict: no classes");
  const EmbeddingMatrix source(Matrix(1, source_emb.size(), std::vector<double>(source_emb.begin(), source_emb.end())),
                               kZtebNormTolerance);
  const LogitMatrix logits = cosine_logits(source, text_embs);
  const auto winners = argmax_set(logits.row(0));
  return {winners.front(), winners.size() > 1};
}

LoadedDataset load_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  LoadedDataset data;
  data.manifest = manifest;
  for (const auto& p : manifest.text_embedding_files) {
    auto t = read_embedding_file(manifest.resolve(p));
    if (t.rows() != manifest.num_classes) {
      throw ManifestError(p.string() + ": " + std::to_string(t.rows()) + " class rows, manifest declares " +
                          std::to_string(manifest.num_classes));
    }
    if (!data.templates.empty() && t.dim() != data.templates.front().dim()) {
      throw ManifestError(p.string() + ": text embedding dimension differs from the first template");
    }
    data.templates.push_back(std::move(t));
  }
  const std::size_t dim = data.templates.front().dim();

  std::map<std::filesystem::path, EmbeddingMatrix> files;
  for (const auto& s : manifest.samples) {
    const auto path = manifest.resolve(s.path);
    auto it = files.find(path);
    if (it == files.end()) it = files.emplace(path, read_embedding_file(path)).first;
    const EmbeddingMatrix& file = it->second;
    if (file.dim() != dim) {
      throw ManifestError("sample " + s.sample_id + ": view dimension " + std::to_string(file.dim()) +
                          " differs from text dimension " + std::to_string(dim));
    }
    if (s.offset + manifest.n_views > file.rows()) {
      throw ManifestError("sample " + s.sample_id + ": rows [" + std::to_string(s.offset) + ", " +
                          std::to_string(s.offset + manifest.n_views) + ") run past the " +
                          std::to_string(file.rows()) + " rows of " + s.path.string());
    }
    data.views.push_back(file.slice_rows(s.offset, manifest.n_views));
  }
  return data;
}

EvaluationReport evaluate_dataset(const LoadedDataset& data, std::span<const Method> methods, const ZeroConfig& cfg,
                                  unsigned threads) {
  cfg.validate();
  const auto has = [&](Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  if (has(Method::ZeroEnsemble) && data.templates.size() < 2) {
    throw ManifestError("zero_ensemble needs at least two text embedding files");
  }
  const auto& manifest = data.manifest;

  EvaluationReport report;
  report.dataset = manifest.dataset;
  for (auto m : {Method::ZeroShot, Method::Zero, Method::ZeroEnsemble}) {
    if (has(m)) report.methods.push_back(m);
  }
  report.gamma = cfg.gamma;
  report.tau = cfg.tau.value();
  report.strategy = cfg.strategy;
  report.seed = cfg.seed;
  report.n_views = manifest.n_views;
  report.kept_per_sample = filter_keep_count(manifest.n_views, cfg.gamma);

  std::optional<EmbeddingMatrix> ensembled;
  if (has(Method::ZeroEnsemble)) ensembled = ensemble_text_embeddings(data.templates);

  const std::size_t n = manifest.samples.size();
  report.samples.resize(n);
  auto run = [&](std::size_t i) {
    const auto& rec = manifest.samples[i];
    const auto& views = data.views[i];
    SamplePrediction out;
    out.sample_id = rec.sample_id;
    out.label = rec.label;
    const std::uint64_t stream = fnv1a(rec.sample_id);
    if (has(Method::ZeroShot)) {
      const auto zs = zeroshot_predict(views.row(0), data.templates.front());
      out.zero_shot = zs.predicted_class;
      out.zero_shot_tie = zs.tie;
    }
    if (has(Method::Zero)) {
      const auto r = zero_predict(views, data.templates.front(), cfg, stream);
      out.zero = r.predicted_class;
      out.zero_tie = r.tie_occurred;
      out.tie_break_fallback = r.tie_break_fallback;
      out.kept_views = r.filter_mask.kept_count();
      out.tied_views = static_cast<std::size_t>(
          std::count_if(r.fractional_votes.begin(), r.fractional_votes.end(), [](double v) { return v > 0.0; }));
    }
    if (has(Method::ZeroEnsemble)) {
      const auto r = zero_predict(views, *ensembled, cfg, stream);
      out.zero_ensemble = r.predicted_class;
      out.zero_ensemble_tie = r.tie_occurred;
      out.tie_break_fallback = out.tie_break_fallback || r.tie_break_fallback;
      if (!has(Method::Zero)) out.kept_views = r.filter_mask.kept_count();
    }
    report.samples[i] = std::move(out);
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(threads, n)));
  {
    std::vector<std::future<void>> workers;
    for (unsigned w = 0; w < threads; ++w) {
      workers.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < n; i += threads) run(i);
      }));
    }
    for (auto& f : workers) f.get();
  }

  for (Method m : report.methods) {
    MethodAccuracy acc;
    acc.method = m;
    acc.total = n;
    for (const auto& s : report.samples) {
      const auto& pred = m == Method::ZeroShot ? s.zero_shot : m == Method::Zero ? s.zero : s.zero_ensemble;
      if (pred && *pred == s.label) ++acc.correct;
    }
    acc.top1 = n == 0 ? 0.0 : static_cast<double>(acc.correct) / static_cast<double>(n);
    report.accuracy.push_back(acc);
  }
  for (const auto& s : report.samples) {
    report.zero_shot_ties += s.zero_shot_tie ? 1 : 0;
    report.zero_ties += s.zero_tie ? 1 : 0;
    report.zero_ensemble_ties += s.zero_ensemble_tie ? 1 : 0;
    report.tie_break_fallbacks += s.tie_break_fallback ? 1 : 0;
    report.tied_views += s.tied_views;
  }
  return report;
}

EvaluationReport evaluate_dataset(const DatasetManifest& manifest, std::span<const Method> methods,
                                  const ZeroConfig& cfg, unsigned threads) {
  return evaluate_dataset(load_dataset(manifest), methods, cfg, threads);
}

std::string report_to_json(const EvaluationReport& r) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["dataset"] = r.dataset;
  ordered_json methods = ordered_json::array();
  for (auto m : r.methods) methods.push_back(to_string(m));
  doc["config"] = {{"methods", methods},
                   {"gamma", r.gamma},
                   {"tau", r.tau},
                   {"tie_break", to_string(r.strategy)},
                   {"seed", r.seed}};
  ordered_json acc = ordered_json::object();
  for (const auto& a : r.accuracy) {
    acc[std::string(to_string(a.method))] = {{"correct", a.correct}, {"total", a.total}, {"top1", a.top1}};
  }
  doc["accuracy"] = acc;
  doc["filter"] = {{"n_views", r.n_views}, {"kept_per_sample", r.kept_per_sample}};
  doc["ties"] = {{"zero_shot", r.zero_shot_ties},
                 {"zero", r.zero_ties},
                 {"zero_ensemble", r.zero_ensemble_ties},
                 {"greedy_fallbacks", r.tie_break_fallbacks},
                 {"classes_with_fractional_votes", r.tied_views}};
  ordered_json samples = ordered_json::array();
  for (const auto& s : r.samples) {
    ordered_json j;
    j["sample_id"] = s.sample_id;
    j["label"] = s.label;
    if (s.zero_shot) j["zero_shot"] = *s.zero_shot;
    if (s.zero) j["zero"] = *s.zero;
    if (s.zero_ensemble) j["zero_ensemble"] = *s.zero_ensemble;
    j["tie"] = s.zero_tie || s.zero_ensemble_tie;
    j["fallback"] = s.tie_break_fallback;
    samples.push_back(std::move(j));
  }
  doc["samples"] = samples;
  return doc.dump(2) + "\n";
}

std::string report_to_csv(const EvaluationReport& r) {
  std::ostringstream out;
  out << "sample_id,label,zero_shot,zero,zero_ensemble,zero_shot_tie,zero_tie,zero_ensemble_tie,fallback\n";
  auto opt = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& s : r.samples) {
    out << s.sample_id << ',' << s.label << ',' << opt(s.zero_shot) << ',' << opt(s.zero) << ','
        << opt(s.zero_ensemble) << ',' << s.zero_shot_tie << ',' << s.zero_tie << ',' << s.zero_ensemble_tie << ','
        << s.tie_break_fallback << '\n';
  }
  return out.str();
}

RiskSummary risk_check_dataset(const LoadedDataset& data, Temperature tau) {
  RiskSummary s;
  for (std::size_t i = 0; i < data.views.size(); ++i) {
    const auto probs = softmax_rows(cosine_logits(data.views[i], data.templates.front()), tau);
    const std::size_t label = data.manifest.samples[i].label;
    const auto l1 = risk_bound_check(label, probs, RiskLoss::L1);
    const auto l2 = risk_bound_check(label, probs, RiskLoss::L2Norm);
    ++s.samples;
    s.holds_l1 += l1.holds ? 1 : 0;
    s.holds_l2 += l2.holds ? 1 : 0;
    s.mean_lhs_l1 += l1.lhs;
    s.mean_rhs_l1 += l1.rhs;
    s.mean_lhs_l2 += l2.lhs;
    s.mean_rhs_l2 += l2.rhs;
  }
  if (s.samples > 0) {
    const double n = static_cast<double>(s.samples);
    s.mean_lhs_l1 /= n;
    s.mean_rhs_l1 /= n;
    s.mean_lhs_l2 /= n;
    s.mean_rhs_l2 /= n;
  }
  return s;
}

}  // namespace zero_tta
