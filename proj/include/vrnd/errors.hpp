#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vrnd {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A computation left the finite reals (log of a non-positive value, overflow, NaN).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Bad key/value configuration or command-line input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed byte stream; offset is the position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Well-formed container holding an encoding we do not decode.
class UnsupportedFormatError : public Error {
 public:
  UnsupportedFormatError(const std::string& what, int format_code)
      : Error(what), format_code_(format_code) {}
  int format_code() const noexcept { return format_code_; }

 private:
  int format_code_;
};

}  // namespace vrnd
