#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace artrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidTwist : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A structurally well-formed input violated a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// The assembled objective has no rows: nothing constrains the pose.
class InsufficientObservation : public Error {
 public:
  using Error::Error;
};

}  // namespace artrack
