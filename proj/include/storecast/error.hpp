#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace storecast {

enum class ErrorKind {
  // ingest
  MissingFile,
  MissingColumn,
  EmptyFile,
  MalformedRow,
  NoRecordsForStore,
  RaggedPanel,
  DomainError,
  // tensors and autodiff
  ShapeMismatch,
  NonScalarLoss,
  MissingGradient,
  // models
  OverflowGuard,
  DivergenceDetected,
  NonConvergence,
  SingularDesign,
  // metrics
  ZeroVolume,
  EmptyStore,
  AlignmentMismatch,
  // io and orchestration
  IoError,
  MissingPrerequisite,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::NoRecordsForStore: return "NoRecordsForStore";
    case ErrorKind::RaggedPanel: return "RaggedPanel";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::MissingGradient: return "MissingGradient";
    case ErrorKind::OverflowGuard: return "OverflowGuard";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::ZeroVolume: return "ZeroVolume";
    case ErrorKind::EmptyStore: return "EmptyStore";
    case ErrorKind::AlignmentMismatch: return "AlignmentMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::MissingPrerequisite: return "MissingPrerequisite";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Process exit status associated with an error kind:
/// 1 usage/config, 2 data error, 3 numerical failure.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::MissingPrerequisite:
      return 1;
    case ErrorKind::ShapeMismatch:
    case ErrorKind::NonScalarLoss:
    case ErrorKind::MissingGradient:
    case ErrorKind::OverflowGuard:
    case ErrorKind::DivergenceDetected:
    case ErrorKind::NonConvergence:
    case ErrorKind::SingularDesign:
      return 3;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) {
  throw Error(kind, detail);
}

}  // namespace storecast
