#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otslot {

/// Base class for every error raised by the library. `kind()` is a stable,
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape_error", message) {}
};

/// Raised by log/div/sqrt on operands outside their domain.
class DomainError : public Error {
 public:
  DomainError(const std::string& message, std::size_t index)
      : Error("domain_error", message + " at flat index " + std::to_string(index)),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class TapeError : public Error {
 public:
  explicit TapeError(const std::string& message) : Error("tape_error", message) {}
};

class MarginalError : public Error {
 public:
  explicit MarginalError(const std::string& message) : Error("marginal_error", message) {}
};

/// Non-finite values appeared inside an iterative solver or gradient.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message) : Error("numerical_error", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error("parse_error", "line " + std::to_string(line) + ", column " +
                                 std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

}  // namespace otslot
