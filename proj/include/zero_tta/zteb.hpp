#pragma once

// ZTEB embedding files.
//
//   offset  size        field
//   0       4           magic "ZTEB"
//   4       2           version, u16 little-endian, = 1
//   6       1           dtype tag, u8, 1 = float32
//   7       1           rank, u8, >= 1
//   8       8 * rank    shape, u64 little-endian each
//   8+8r    4 * prod    payload, row-major float32 little-endian
//
// Nothing may follow the payload.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "zero_tta/error.hpp"
#include "zero_tta/matrix.hpp"

namespace zero_tta {

inline constexpr char kZtebMagic[4] = {'Z', 'T', 'E', 'B'};
inline constexpr std::uint16_t kZtebVersion = 1;
inline constexpr std::uint8_t kZtebFloat32 = 1;
/// Row-norm tolerance applied when loading 32-bit payloads.
inline constexpr double kZtebNormTolerance = 1e-3;

enum class ZtebErrorKind {
  Io,
  BadMagic,
  VersionMismatch,
  UnsupportedDtype,
  BadRank,
  TruncatedHeader,
  TruncatedPayload,
  TrailingBytes,
  NonFinite,
  NormViolation,
};

std::string_view to_string(ZtebErrorKind kind) noexcept;

class ZtebError : public Error {
 public:
  ZtebError(ZtebErrorKind kind, std::uint64_t offset, const std::string& detail);
  ZtebErrorKind kind() const noexcept { return kind_; }
  /// Byte offset at which the problem was detected.
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  ZtebErrorKind kind_;
  std::uint64_t offset_;
};

struct ZtebTensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
};

/// Parses a whole file image. Structural checks only (no norm check).
ZtebTensor decode_zteb(std::span<const std::byte> bytes);
std::vector<std::byte> encode_zteb(const ZtebTensor& tensor);

ZtebTensor read_zteb(const std::filesystem::path& path);
void write_zteb(const ZtebTensor& tensor, const std::filesystem::path& path);

/// Loads a file of rank >= 2 as (product of leading dims) x (last dim) rows,
/// widening to double and checking that every row has unit norm.
EmbeddingMatrix read_embedding_file(const std::filesystem::path& path);
/// Same checks, on a decoded tensor. `source` only labels error messages.
EmbeddingMatrix embeddings_from_tensor(const ZtebTensor& tensor, const std::string& source = "<memory>");

/// Narrows to float32 and writes a rank-2 file.
void write_embedding_file(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
ZtebTensor tensor_from_matrix(const Matrix& m);

}  // namespace zero_tta
