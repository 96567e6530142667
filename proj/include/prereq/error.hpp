#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prereq {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented contract (bad ids, bad ranges, empty inputs).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A text file could not be parsed; carries the offending file and line.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Operand shapes do not conform.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Inconsistent or missing configuration.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// An operation was invoked outside its precondition (e.g. unsupervised
/// training handed a graph with concept-concept edges).
class PreconditionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Failure while running (divergence, I/O, incomplete artifacts).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace prereq
