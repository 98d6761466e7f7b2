#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "synthetic.hpp"
#include "zero_tta/evaluation.hpp"

using namespace zero_tta;
using namespace zero_tta::testing;

namespace {

std::vector<double> unit(std::vector<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  for (double& x : v) x /= std::sqrt(sq);
  return v;
}

// Row with cosine a to e0 and b to e1 in three dimensions.
std::vector<double> view(double a, double b) { return {a, b, std::sqrt(1.0 - a * a - b * b)}; }

LoadedDataset in_memory(std::vector<EmbeddingMatrix> views, std::vector<std::size_t> labels,
                        std::vector<EmbeddingMatrix> templates) {
  LoadedDataset d;
  d.manifest.dataset = "mem";
  d.manifest.num_classes = templates.front().rows();
  d.manifest.n_views = views.front().rows();
  d.manifest.text_embedding_files.resize(templates.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    d.manifest.samples.push_back({"x" + std::to_string(i), labels[i], "v.zteb", 0});
  }
  d.views = std::move(views);
  d.templates = std::move(templates);
  return d;
}

const Method kAll[] = {Method::ZeroShot, Method::Zero, Method::ZeroEnsemble};
const Method kSingle[] = {Method::ZeroShot, Method::Zero};

}  // namespace

TEST_CASE("zero-shot picks the most similar class") {
  const EmbeddingMatrix text(Matrix::from_rows({view(0.31, 0.0), view(0.29, 0.0), view(0.12, 0.0)}));
  const std::vector<double> src{1.0, 0.0, 0.0};
  const auto p = zeroshot_predict(src, text);
  CHECK(p.predicted_class == 0);
  CHECK_FALSE(p.tie);

  const EmbeddingMatrix two(Matrix::from_rows({unit({1, 1, 0}), unit({1, 0, 1})}));
  const auto t = zeroshot_predict(std::vector<double>{1, 0, 0}, two);
  CHECK(t.tie);
  CHECK(t.predicted_class == 0);
  CHECK_THROWS_AS(zeroshot_predict(std::vector<double>{1, 0}, two), ShapeError);
}

TEST_CASE("confident views overrule a wrong source view") {
  const EmbeddingMatrix text(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}}));
  // Source leans to class 1; four confident views say 0, two say 1, one is unsure.
  const EmbeddingMatrix views(Matrix::from_rows({view(0.3, 0.5), view(0.9, 0.1), view(0.85, 0.05),
                                                 view(0.95, 0.0), view(0.8, 0.1), view(0.1, 0.9), view(0.0, 0.85),
                                                 view(0.45, 0.44)}));
  const auto data = in_memory({views}, {0}, {text});
  ZeroConfig cfg;
  cfg.tau = Temperature(0.1);
  cfg.gamma = 0.75;
  const auto r = evaluate_dataset(data, kSingle, cfg, 1);
  CHECK(r.kept_per_sample == 6);
  CHECK(*r.samples[0].zero_shot == 1);
  CHECK(*r.samples[0].zero == 0);
  CHECK(r.samples[0].kept_views == 6);
  CHECK(r.accuracy[0].correct == 0);
  CHECK(r.accuracy[1].correct == 1);
  CHECK_FALSE(r.samples[0].zero_ensemble.has_value());
}

TEST_CASE("identical views reduce ZERO to zero-shot") {
  Rng rng(4);
  const auto text = random_unit_rows(rng, 6, 10);
  std::vector<EmbeddingMatrix> views;
  std::vector<std::size_t> labels;
  for (int s = 0; s < 40; ++s) {
    const auto src = random_unit_rows(rng, 1, 10);
    Matrix m(8, 10);
    for (std::size_t v = 0; v < 8; ++v) std::copy(src.row(0).begin(), src.row(0).end(), m.row(v).begin());
    views.emplace_back(m);
    labels.push_back(uniform_index(rng, 6));
  }
  const auto data = in_memory(views, labels, {text});
  for (double g : {0.1, 0.5, 1.0}) {
    ZeroConfig cfg;
    cfg.gamma = g;
    const auto r = evaluate_dataset(data, kSingle, cfg, 2);
    for (const auto& s : r.samples) CHECK(s.zero == s.zero_shot);
  }
}

TEST_CASE("one view at gamma 1 is zero-shot") {
  Rng rng(5);
  const auto text = random_unit_rows(rng, 5, 8);
  std::vector<EmbeddingMatrix> views;
  for (int s = 0; s < 50; ++s) views.push_back(random_unit_rows(rng, 1, 8));
  const auto data = in_memory(views, std::vector<std::size_t>(50, 0), {text});
  ZeroConfig cfg;
  cfg.gamma = 1.0;
  for (const auto& s : evaluate_dataset(data, kSingle, cfg).samples) CHECK(s.zero == s.zero_shot);
}

TEST_CASE("fixture evaluation is deterministic and order independent") {
  const auto dir = scratch_dir("eval");
  const auto path = write_fixture_dataset(dir, FixtureSpec{});
  const auto manifest = load_manifest(path);
  ZeroConfig cfg;
  cfg.strategy = TieBreakStrategy::Random;
  cfg.seed = 11;
  const auto a = evaluate_dataset(manifest, kAll, cfg, 1);
  const auto b = evaluate_dataset(manifest, kAll, cfg, 3);
  CHECK(report_to_json(a) == report_to_json(b));
  CHECK(report_to_csv(a) == report_to_csv(b));
  CHECK(a.accuracy.size() == 3);
  CHECK(a.accuracy[1].top1 > 0.5);

  auto shuffled = manifest;
  Rng rng(1);
  for (std::size_t i = shuffled.samples.size(); i > 1; --i) {
    std::swap(shuffled.samples[i - 1], shuffled.samples[uniform_index(rng, i)]);
  }
  const auto c = evaluate_dataset(shuffled, kAll, cfg, 2);
  std::map<std::string, const SamplePrediction*> by_id;
  for (const auto& s : c.samples) by_id[s.sample_id] = &s;
  for (const auto& s : a.samples) {
    const auto* t = by_id.at(s.sample_id);
    CHECK(s.zero_shot == t->zero_shot);
    CHECK(s.zero == t->zero);
    CHECK(s.zero_ensemble == t->zero_ensemble);
  }
  for (std::size_t m = 0; m < 3; ++m) CHECK(a.accuracy[m].correct == c.accuracy[m].correct);
}

TEST_CASE("dataset loading errors") {
  const auto dir = scratch_dir("eval_err");
  FixtureSpec one;
  one.templates = 1;
  auto manifest = load_manifest(write_fixture_dataset(dir, one));
  CHECK_THROWS_AS(evaluate_dataset(manifest, kAll, ZeroConfig{}), ManifestError);
  CHECK_NOTHROW(evaluate_dataset(manifest, kSingle, ZeroConfig{}));

  auto past_end = manifest;
  past_end.samples.back().offset += 1;
  CHECK_THROWS_AS(load_dataset(past_end), ManifestError);

  auto missing = manifest;
  missing.samples[0].path = "absent.zteb";
  CHECK_THROWS_AS(load_dataset(missing), ZtebError);

  auto classes = manifest;
  classes.num_classes = 5;
  classes.class_names.push_back("extra");
  CHECK_THROWS_AS(load_dataset(classes), ManifestError);
}

TEST_CASE("report serialization") {
  const auto manifest = load_manifest(write_fixture_dataset(scratch_dir("eval_json"), FixtureSpec{}));
  const auto r = evaluate_dataset(manifest, kAll, ZeroConfig{});
  const auto json = report_to_json(r);
  CHECK(json.find("\"zero_ensemble\"") != std::string::npos);
  CHECK(json.find("\"kept_per_sample\": 4") != std::string::npos);
  const auto csv = report_to_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 25);
  CHECK(csv.rfind("sample_id,label,zero_shot,zero,zero_ensemble", 0) == 0);
  CHECK(to_string(Method::ZeroEnsemble) == "zero_ensemble");
  CHECK(parse_method("zero") == Method::Zero);
  CHECK_FALSE(parse_method("tpt").has_value());

  const auto risk = risk_check_dataset(load_dataset(manifest), Temperature(0.01));
  CHECK(risk.samples == 24);
  CHECK(risk.holds_l1 == 24);
  CHECK(risk.holds_l2 == 24);
}
