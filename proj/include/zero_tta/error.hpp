#pragma once

#include <stdexcept>
#include <string>

namespace zero_tta {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value outside its documented domain (non-finite, out of range, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace zero_tta
