#pragma once

#include <stdexcept>
#include <string>

namespace kse {

/// Failure categories; the numeric values double as CLI exit codes.
enum class ErrorCategory : int {
  config = 2,
  data = 3,
  numeric = 4,
  io = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

// Raised when a dense kernel block would exceed the configured entry cap.
// Callers are expected to split the request into row batches.
class BudgetError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace kse
