#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "zero_tta/error.hpp"

namespace zero_tta {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix payload size does not match shape");
    }
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) throw ShapeError("ragged row list");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  double& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Unscaled cosine similarities, N views x C classes.
using LogitMatrix = Matrix;
/// Per-row probability distributions, N x C.
using ProbabilityMatrix = Matrix;
using ProbabilityVector = std::vector<double>;

/// Default tolerance on row norms for in-memory embedding matrices.
inline constexpr double kUnitNormTolerance = 1e-4;

/// Matrix whose rows are finite, unit-L2-norm embeddings.
///
/// The invariant is checked on construction; the tolerance can be widened by
/// loaders that ingest 32-bit payloads.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(Matrix m, double norm_tolerance = kUnitNormTolerance);

  /// Normalizes every row to unit length; throws DomainError on a zero row.
  static EmbeddingMatrix normalized(Matrix m);

  std::size_t rows() const noexcept { return m_.rows(); }
  std::size_t dim() const noexcept { return m_.cols(); }
  std::span<const double> row(std::size_t i) const noexcept { return m_.row(i); }
  const Matrix& matrix() const noexcept { return m_; }

  /// Copy of rows [first, first + count).
  EmbeddingMatrix slice_rows(std::size_t first, std::size_t count) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  Matrix m_;
};

}  // namespace zero_tta
