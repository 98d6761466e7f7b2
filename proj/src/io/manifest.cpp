#include "zero_tta/manifest.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace zero_tta {
namespace {

using nlohmann::json;

template <class T>
T required(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ManifestError(where + ": missing field \"" + key + "\"");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ManifestError(where + ": field \"" + key + "\" has the wrong type (" + e.what() + ")");
  }
}

std::size_t required_count(const json& obj, const char* key, const std::string& where) {
  const auto v = required<std::int64_t>(obj, key, where);
  if (v < 0) throw ManifestError(where + ": field \"" + key + "\" must not be negative");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

void DatasetManifest::validate() const {
  if (num_classes == 0) throw ManifestError("manifest: num_classes must be positive");
  if (!class_names.empty() && class_names.size() != num_classes) {
    throw ManifestError("manifest: class_names has " + std::to_string(class_names.size()) + " entries, num_classes is " +
                        std::to_string(num_classes));
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ManifestError("manifest: temperature must be > 0");
  if (n_views == 0) throw ManifestError("manifest: n_views must be positive");
  if (text_embedding_files.empty()) throw ManifestError("manifest: at least one text embedding file is required");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.label >= num_classes) {
      throw ManifestError("manifest: sample " + s.sample_id + " has label " + std::to_string(s.label) +
                          " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (!ids.insert(s.sample_id).second) throw ManifestError("manifest: duplicate sample_id " + s.sample_id);
  }
}

DatasetManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ManifestError(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ManifestError("manifest: top level must be an object");

  DatasetManifest m;
  m.base_dir = base_dir;
  m.dataset = required<std::string>(doc, "dataset", "manifest");
  m.num_classes = required_count(doc, "num_classes", "manifest");
  if (doc.contains("class_names")) m.class_names = required<std::vector<std::string>>(doc, "class_names", "manifest");
  m.temperature = required<double>(doc, "temperature", "manifest");
  m.n_views = required_count(doc, "n_views", "manifest");
  for (const auto& p : required<std::vector<std::string>>(doc, "text_embedding_files", "manifest")) {
    m.text_embedding_files.emplace_back(p);
  }
  const auto samples = doc.contains("samples") ? doc.at("samples") : json::array();
  if (!samples.is_array()) throw ManifestError("manifest: samples must be an array");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string where = "manifest sample " + std::to_string(i);
    const auto& s = samples[i];
    if (!s.is_object()) throw ManifestError(where + ": must be an object");
    SampleRecord r;
    r.sample_id = required<std::string>(s, "sample_id", where);
    r.label = required_count(s, "label", where);
    r.path = required<std::string>(s, "path", where);
    r.offset = required_count(s, "offset", where);
    m.samples.push_back(std::move(r));
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string manifest_to_json(const DatasetManifest& m) {
  json doc;
  doc["dataset"] = m.dataset;
  doc["num_classes"] = m.num_classes;
  doc["class_names"] = m.class_names;
  doc["temperature"] = m.temperature;
  doc["n_views"] = m.n_views;
  json files = json::array();
  for (const auto& p : m.text_embedding_files) files.push_back(p.generic_string());
  doc["text_embedding_files"] = files;
  json samples = json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"sample_id", s.sample_id}, {"label", s.label}, {"path", s.path.generic_string()},
                       {"offset", s.offset}});
  }
  doc["samples"] = samples;
  return doc.dump(2) + "\n";
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << manifest_to_json(manifest);
}

}  // namespace zero_tta
