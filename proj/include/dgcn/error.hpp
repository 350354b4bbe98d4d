#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dgcn {

// Base of every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class StaleMask : public Error {
 public:
  using Error::Error;
};

class InvalidAlpha : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatVersionMismatch : public Error {
 public:
  using Error::Error;
};

class ChecksumMismatch : public Error {
 public:
  using Error::Error;
};

class SeriesTooShort : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class MissingColumn : public Error {
 public:
  using Error::Error;
};

class MemoryCapExceeded : public Error {
 public:
  using Error::Error;
};

// Non-numeric or malformed CSV cell. Row and column are 1-based, with the
// header counted as row 1.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t col, const std::string& what)
      : Error("row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + what),
        row_(row),
        col_(col) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

}  // namespace dgcn
