#pragma once

#include <stdexcept>
#include <string>

namespace duskill {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI's JSON error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& m) : Error("parameter_error", m) {}
};

/// Operation not allowed in the current object state (e.g. stepping a finished episode).
class StateError : public Error {
 public:
  explicit StateError(const std::string& m) : Error("state_error", m) {}
};

/// Broken interface contract: shape mismatches, frozen parameters modified, ...
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& m) : Error("contract_error", m) {}
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& m) : Error("generation_error", m) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& m) : Error("training_error", m) {}
};

class SamplingError : public Error {
 public:
  explicit SamplingError(const std::string& m) : Error("sampling_error", m) {}
};

class UnsupportedVariantError : public Error {
 public:
  explicit UnsupportedVariantError(const std::string& m) : Error("unsupported_variant", m) {}
};

class FileError : public Error {
 public:
  explicit FileError(const std::string& m) : Error("file_error", m) {}
};

}  // namespace duskill
