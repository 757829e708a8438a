#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cmda {

enum class ErrorKind {
  kDimensionMismatch,
  kFormat,
  kIo,
  kConfig,
  kProtocol,
  kDegenerate,
  kInvalidArgument,
};

std::string_view toString(ErrorKind kind);

// Base for every error raised by the library. The kind is stable and is what
// the command-line tool reports in its machine-readable error output.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  DimensionError(std::string_view what, std::size_t expected, std::size_t actual);

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message)
      : Error(ErrorKind::kFormat, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorKind::kIo, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorKind::kConfig, message) {}
};

// Raised when a caller tries to feed evaluation-only data into training.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& message)
      : Error(ErrorKind::kProtocol, message) {}
};

class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& message)
      : Error(ErrorKind::kDegenerate, message) {}
};

}  // namespace cmda
