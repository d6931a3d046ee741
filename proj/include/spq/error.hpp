#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spq {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed on-disk data. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  explicit FormatError(const std::string& what) : Error(what), offset_(0) {}

  std::size_t offset() const noexcept { return offset_; }

  // Same error with `prefix` (such as a file name) in front of the message.
  static FormatError prefixed(const std::string& prefix, const FormatError& e) {
    FormatError out(prefix + e.what());
    out.offset_ = e.offset_;
    return out;
  }

 private:
  std::size_t offset_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A value or parameter outside its admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension " +
                            std::to_string(a) + " != " + std::to_string(b));
  }
}

}  // namespace detail
}  // namespace spq
