#pragma once

#include <stdexcept>
#include <string>

namespace tar {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kFormat = 3,
  kNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

// Shape or dimension mismatch between tensors.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error("dimension error: " + what, ExitCode::kConfig) {}
};

// Misuse of an API contract (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error("contract error: " + what, ExitCode::kConfig) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error("validation error: " + what, ExitCode::kConfig) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error("config error: " + what, ExitCode::kConfig) {}
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what)
      : Error("geometry error: " + what, ExitCode::kConfig) {}
};

class EstimationError : public Error {
 public:
  explicit EstimationError(const std::string& what)
      : Error("estimation error: " + what, ExitCode::kNumerical) {}
};

// Malformed file contents (bad magic, truncated record, ...).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error("format error: " + what, ExitCode::kFormat) {}
};

class IngestionError : public Error {
 public:
  explicit IngestionError(const std::string& what)
      : Error("ingestion error: " + what, ExitCode::kFormat) {}
};

// NaN/Inf encountered during training or evaluation.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error("numerical error: " + what, ExitCode::kNumerical) {}
};

}  // namespace tar
