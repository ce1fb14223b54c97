#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdiar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// More speakers intersect a window than there are segmentation channels.
class CapacityExceeded : public Error {
 public:
  using Error::Error;
};

/// Pooling requested for a weight column that sums to zero.
class EmptySupport : public Error {
 public:
  using Error::Error;
};

/// Cosine distance requested on a zero-norm vector.
class DegenerateVector : public Error {
 public:
  using Error::Error;
};

/// Slices handed to the accumulator out of window order.
class OrderViolation : public Error {
 public:
  using Error::Error;
};

class UriMismatch : public Error {
 public:
  using Error::Error;
};

/// Binary container or config file is malformed, or an I/O call failed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Malformed RTTM line. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace sdiar
