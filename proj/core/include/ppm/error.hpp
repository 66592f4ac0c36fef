#pragma once

#include <stdexcept>
#include <string>

namespace ppm {

/// Broad failure category. Each category maps to one process exit code in the CLI.
enum class ErrorCategory {
  kConfig,   // bad configuration, schema or model settings
  kData,     // malformed or inconsistent input data
  kNumeric,  // non-finite values, singular normalization
  kContract  // API misuse (wrong call order, wrong input family)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Data-level failures.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

class ValidityError : public Error {
 public:
  explicit ValidityError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

class LengthError : public Error {
 public:
  explicit LengthError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

class AlignmentError : public Error {
 public:
  explicit AlignmentError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

// Configuration failures.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::kNumeric, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorCategory::kContract, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::kContract, what) {}
};

/// Process exit code for an error category: 2 config, 3 data, 4 numeric.
int exit_code_for(ErrorCategory category) noexcept;

}  // namespace ppm
