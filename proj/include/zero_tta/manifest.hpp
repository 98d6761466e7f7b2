#pragma once

// Dataset manifests: a JSON document tying class names, the model's softmax
// temperature, per-template text embeddings and per-sample view blocks
// together.
//
//   {
//     "dataset": "imagenet-a",
//     "num_classes": 200,
//     "class_names": ["goldfish", ...],
//     "temperature": 0.01,
//     "n_views": 64,
//     "text_embedding_files": ["text_t0.zteb", ...],
//     "samples": [
//       {"sample_id": "0001", "label": 3, "path": "views.zteb", "offset": 0},
//       ...
//     ]
//   }
//
// `offset` counts rows: the sample's n_views x D block starts at row `offset`
// of the file flattened to rows of length D. Row 0 of every block is the
// un-augmented source image. Relative paths resolve against the manifest's
// directory. Unknown keys are preserved by tools that write them but ignored
// here.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zero_tta/error.hpp"

namespace zero_tta {

class ManifestError : public Error {
 public:
  using Error::Error;
};

struct SampleRecord {
  std::string sample_id;
  std::size_t label = 0;
  std::filesystem::path path;
  std::uint64_t offset = 0;
};

struct DatasetManifest {
  std::string dataset;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  double temperature = 0.01;
  std::size_t n_views = 0;
  std::vector<std::filesystem::path> text_embedding_files;
  std::vector<SampleRecord> samples;
  /// Directory relative paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  /// Structural checks that need no file access. Throws ManifestError.
  void validate() const;
};

DatasetManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace zero_tta
