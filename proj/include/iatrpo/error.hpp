#pragma once

#include <stdexcept>
#include <string>

namespace iatrpo {

// Failure categories double as CLI exit codes.
enum class ErrorCategory : int {
  kContract = 1,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error(ErrorCategory::kContract, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::kConfig, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::kNumeric, what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace iatrpo
