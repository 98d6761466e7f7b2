#include "zero_tta/zteb.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace zero_tta {
namespace {

static_assert(std::numeric_limits<float>::is_iec559, "ZTEB payloads are IEEE-754 binary32");

constexpr std::size_t kFixedHeader = 8;

std::uint64_t load_le(std::span<const std::byte> bytes, std::size_t offset, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

void store_le(std::vector<std::byte>& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

std::string hex_byte(std::byte b) {
  static constexpr char digits[] = "0123456789abcdef";
  const auto v = std::to_integer<unsigned>(b);
  return std::string("0x") + digits[v >> 4] + digits[v & 0xf];
}

}  // namespace

std::string_view to_string(ZtebErrorKind kind) noexcept {
  switch (kind) {
    case ZtebErrorKind::Io: return "io";
    case ZtebErrorKind::BadMagic: return "bad-magic";
    case ZtebErrorKind::VersionMismatch: return "version-mismatch";
    case ZtebErrorKind::UnsupportedDtype: return "unsupported-dtype";
    case ZtebErrorKind::BadRank: return "bad-rank";
    case ZtebErrorKind::TruncatedHeader: return "truncated-header";
    case ZtebErrorKind::TruncatedPayload: return "truncated-payload";
    case ZtebErrorKind::TrailingBytes: return "trailing-bytes";
    case ZtebErrorKind::NonFinite: return "non-finite";
    case ZtebErrorKind::NormViolation: return "norm-violation";
  }
  return "unknown";
}

ZtebError::ZtebError(ZtebErrorKind kind, std::uint64_t offset, const std::string& detail)
    : Error("ZTEB " + std::string(to_string(kind)) + " at byte offset " + std::to_string(offset) + ": " + detail),
      kind_(kind),
      offset_(offset) {}

ZtebTensor decode_zteb(std::span<const std::byte> bytes) {
  if (bytes.size() < kFixedHeader) {
    throw ZtebError(ZtebErrorKind::TruncatedHeader, bytes.size(),
                    "file holds " + std::to_string(bytes.size()) + " bytes, header needs at least 8");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (bytes[i] != static_cast<std::byte>(kZtebMagic[i])) {
      throw ZtebError(ZtebErrorKind::BadMagic, i,
                      "expected magic \"ZTEB\", found byte " + hex_byte(bytes[i]));
    }
  }
  const auto version = static_cast<std::uint16_t>(load_le(bytes, 4, 2));
  if (version != kZtebVersion) {
    throw ZtebError(ZtebErrorKind::VersionMismatch, 4,
                    "version " + std::to_string(version) + ", reader supports " + std::to_string(kZtebVersion));
  }
  const auto dtype = std::to_integer<std::uint8_t>(bytes[6]);
  if (dtype != kZtebFloat32) {
    throw ZtebError(ZtebErrorKind::UnsupportedDtype, 6, "dtype tag " + std::to_string(dtype) + ", expected 1 (float32)");
  }
  const auto rank = std::to_integer<std::uint8_t>(bytes[7]);
  if (rank == 0) throw ZtebError(ZtebErrorKind::BadRank, 7, "rank must be at least 1");

  const std::size_t header = kFixedHeader + 8 * std::size_t{rank};
  if (bytes.size() < header) {
    throw ZtebError(ZtebErrorKind::TruncatedHeader, bytes.size(),
                    "shape needs " + std::to_string(header) + " header bytes, file has " + std::to_string(bytes.size()));
  }
  ZtebTensor t;
  std::uint64_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    const std::uint64_t extent = load_le(bytes, kFixedHeader + 8 * d, 8);
    if (extent != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / extent) {
      throw ZtebError(ZtebErrorKind::BadRank, kFixedHeader + 8 * d, "shape product overflows");
    }
    count *= extent;
    t.shape.push_back(extent);
  }
  const std::uint64_t payload = count * 4;
  const std::uint64_t available = bytes.size() - header;
  if (available < payload) {
    throw ZtebError(ZtebErrorKind::TruncatedPayload, bytes.size(),
                    "payload needs " + std::to_string(payload) + " bytes, file has " + std::to_string(available));
  }
  if (available > payload) {
    throw ZtebError(ZtebErrorKind::TrailingBytes, header + payload,
                    std::to_string(available - payload) + " bytes follow the payload");
  }
  t.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    t.values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(load_le(bytes, header + 4 * i, 4)));
  }
  return t;
}

std::vector<std::byte> encode_zteb(const ZtebTensor& tensor) {
  if (tensor.shape.empty() || tensor.shape.size() > 255) throw Error("ZTEB rank must be in [1, 255]");
  std::uint64_t count = 1;
  for (auto e : tensor.shape) count *= e;
  if (count != tensor.values.size()) throw ShapeError("ZTEB shape does not match value count");
  std::vector<std::byte> out;
  out.reserve(kFixedHeader + 8 * tensor.shape.size() + 4 * tensor.values.size());
  for (char c : kZtebMagic) out.push_back(static_cast<std::byte>(c));
  store_le(out, kZtebVersion, 2);
  out.push_back(static_cast<std::byte>(kZtebFloat32));
  out.push_back(static_cast<std::byte>(tensor.shape.size()));
  for (auto e : tensor.shape) store_le(out, e, 8);
  for (float v : tensor.values) store_le(out, std::bit_cast<std::uint32_t>(v), 4);
  return out;
}

ZtebTensor read_zteb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ZtebError(ZtebErrorKind::Io, 0, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw ZtebError(ZtebErrorKind::Io, 0, "read failed for " + path.string());
  return decode_zteb(std::as_bytes(std::span(raw)));
}

void write_zteb(const ZtebTensor& tensor, const std::filesystem::path& path) {
  const auto bytes = encode_zteb(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ZtebError(ZtebErrorKind::Io, 0, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ZtebError(ZtebErrorKind::Io, 0, "write failed for " + path.string());
}

EmbeddingMatrix embeddings_from_tensor(const ZtebTensor& tensor, const std::string& source) {
  const std::size_t header = kFixedHeader + 8 * tensor.shape.size();
  if (tensor.shape.size() < 2) {
    throw ZtebError(ZtebErrorKind::BadRank, 7, source + ": embedding files need rank >= 2");
  }
  const std::size_t dim = tensor.shape.back();
  const std::size_t rows = dim == 0 ? 0 : tensor.values.size() / dim;
  if (dim == 0 && !tensor.values.empty()) throw ZtebError(ZtebErrorKind::BadRank, 7, source + ": zero-width rows");
  std::vector<double> data(tensor.values.begin(), tensor.values.end());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ZtebError(ZtebErrorKind::NonFinite, header + 4 * i, source + ": non-finite payload value");
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) sq += data[r * dim + d] * data[r * dim + d];
    const double norm = std::sqrt(sq);
    if (std::abs(norm - 1.0) > kZtebNormTolerance) {
      throw ZtebError(ZtebErrorKind::NormViolation, header + 4 * r * dim,
                      source + ": row " + std::to_string(r) + " has L2 norm " + std::to_string(norm));
    }
  }
  return EmbeddingMatrix(Matrix(rows, dim, std::move(data)), kZtebNormTolerance);
}

EmbeddingMatrix read_embedding_file(const std::filesystem::path& path) {
  return embeddings_from_tensor(read_zteb(path), path.string());
}

ZtebTensor tensor_from_matrix(const Matrix& m) {
  ZtebTensor t;
  t.shape = {m.rows(), m.cols()};
  t.values.assign(m.data().begin(), m.data().end());
  return t;
}

void write_embedding_file(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  write_zteb(tensor_from_matrix(matrix.matrix()), path);
}

}  // namespace zero_tta
