#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace onoff {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File missing, unreadable, or a write failed.
struct IoError : Error {
  using Error::Error;
};

// Malformed text content (manifest line, CSV cell, unknown token).
struct ParseError : Error {
  explicit ParseError(const std::string& msg, std::size_t line_no = 0)
      : Error(line_no ? msg + " (line " + std::to_string(line_no) + ")" : msg),
        line(line_no) {}
  std::size_t line;  // 1-based, 0 when not line-addressable
};

// A sample_id appears more than once in a manifest.
struct DuplicateIdError : Error {
  using Error::Error;
};

// Binary file does not start with the expected magic bytes.
struct BadMagicError : Error {
  using Error::Error;
};

// Shapes or lengths disagree (includes truncated binary payloads).
struct DimensionMismatchError : Error {
  using Error::Error;
};

// NaN or infinity where a finite value is required.
struct NonFiniteError : Error {
  using Error::Error;
};

// An operation received an empty input it cannot handle.
struct EmptyInputError : Error {
  using Error::Error;
};

// Fewer rows/speakers than the operation requires.
struct TooFewItemsError : Error {
  using Error::Error;
};

// Training data contains only one class.
struct SingleClassError : Error {
  using Error::Error;
};

// A parameter is out of its documented range.
struct InvalidArgumentError : Error {
  using Error::Error;
};

}  // namespace onoff
