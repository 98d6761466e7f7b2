#include <doctest.h>

#include <json.hpp>

#include "synthetic.hpp"
#include "zero_tta/manifest.hpp"

using namespace zero_tta;

namespace {

nlohmann::json base_doc() {
  return nlohmann::json::parse(R"({
    "dataset": "toy",
    "num_classes": 3,
    "class_names": ["cat", "dog", "owl"],
    "temperature": 0.01,
    "n_views": 4,
    "text_embedding_files": ["text_t0.zteb", "sub/text_t1.zteb"],
    "samples": [
      {"sample_id": "a", "label": 0, "path": "views.zteb", "offset": 0},
      {"sample_id": "b", "label": 2, "path": "views.zteb", "offset": 4, "extra": true}
    ]
  })");
}

DatasetManifest parse(const nlohmann::json& j) { return parse_manifest(j.dump(), "/data/toy"); }

}  // namespace

TEST_CASE("manifest parse") {
  const auto m = parse(base_doc());
  CHECK(m.dataset == "toy");
  CHECK(m.num_classes == 3);
  CHECK(m.class_names[2] == "owl");
  CHECK(m.temperature == 0.01);
  CHECK(m.n_views == 4);
  REQUIRE(m.samples.size() == 2);
  CHECK(m.samples[1].label == 2);
  CHECK(m.samples[1].offset == 4);
  CHECK(m.resolve("sub/text_t1.zteb") == std::filesystem::path("/data/toy/sub/text_t1.zteb"));
  CHECK(m.resolve("/abs/v.zteb") == std::filesystem::path("/abs/v.zteb"));
}

TEST_CASE("manifest serialization is deterministic and stable") {
  const auto m = parse(base_doc());
  const auto once = manifest_to_json(m);
  CHECK(once == manifest_to_json(m));
  const auto again = parse_manifest(once, "/data/toy");
  CHECK(manifest_to_json(again) == once);
  CHECK(again.samples[0].sample_id == "a");

  const auto dir = zero_tta::testing::scratch_dir("manifest");
  save_manifest(m, dir / "m.json");
  const auto loaded = load_manifest(dir / "m.json");
  CHECK(loaded.base_dir == dir);
  CHECK(manifest_to_json(loaded) == once);
}

TEST_CASE("manifest rejects bad input") {
  for (const char* key : {"dataset", "num_classes", "temperature", "n_views", "text_embedding_files"}) {
    CAPTURE(key);
    auto j = base_doc();
    j.erase(key);
    CHECK_THROWS_AS(parse(j), ManifestError);
  }
  for (const char* key : {"sample_id", "label", "path", "offset"}) {
    CAPTURE(key);
    auto j = base_doc();
    j["samples"][0].erase(key);
    CHECK_THROWS_AS(parse(j), ManifestError);
  }
  auto j = base_doc();
  j["samples"][0]["offset"] = -1;
  CHECK_THROWS_AS(parse(j), ManifestError);
  j = base_doc();
  j["n_views"] = -4;
  CHECK_THROWS_AS(parse(j), ManifestError);
  j = base_doc();
  j["samples"][1]["label"] = 3;
  CHECK_THROWS_AS(parse(j), ManifestError);
  j = base_doc();
  j["samples"][1]["sample_id"] = "a";
  CHECK_THROWS_AS(parse(j), ManifestError);
  j = base_doc();
  j["class_names"] = {"cat"};
  CHECK_THROWS_AS(parse(j), ManifestError);
  j = base_doc();
  j["temperature"] = 0.0;
  CHECK_THROWS_AS(parse(j), ManifestError);
  j = base_doc();
  j["num_classes"] = "three";
  CHECK_THROWS_AS(parse(j), ManifestError);
  CHECK_THROWS_AS(parse_manifest("{not json", "."), ManifestError);
  CHECK_THROWS_AS(parse_manifest("[1, 2]", "."), ManifestError);
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.json"), ManifestError);
}
