#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace camtrap {

/// Base class for every error raised by the library. The CLI maps it to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document. Carries the byte offset and 1-based line of the fault
/// when they are known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte = 0, std::size_t line = 0)
      : Error(what), byte_(byte), line_(line) {}

  std::size_t byte() const noexcept { return byte_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t byte_;
  std::size_t line_;
};

/// A request that is well formed but violates a precondition. `details` lists every
/// offending item so callers can report all of them at once.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> details = {})
      : Error(what), details_(std::move(details)) {}

  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  std::vector<std::string> details_;
};

/// Numerical failure during optimisation (non-finite loss or parameters).
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace camtrap
