#pragma once

#include <stdexcept>
#include <string>

namespace sufa {

// Exit codes reported by the command-line tool.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 1,
  kInput = 2,
  kNumeric = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Configuration rejected before any computation starts.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Malformed or degenerate user data.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ExitCode::kInput, what) {}
};

/// Matrix shapes disagree with the model dimensions.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ExitCode::kInput, what) {}
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

/// Non-finite intermediate or failed factorization.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

class IllConditionedError : public NumericError {
 public:
  explicit IllConditionedError(const std::string& what) : NumericError(what) {}
};

}  // namespace sufa
