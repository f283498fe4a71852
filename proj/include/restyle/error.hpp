#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace restyle {

enum class ErrorCode {
  // scene-io
  MissingFile,
  DimensionMismatch,
  UnknownLabelId,
  MalformedHeader,
  MagicMismatch,
  IoFailure,
  InvalidValue,
  DegenerateTrajectory,
  // segmatch / attention
  ConflictingOverride,
  EmptyRowWithKeepSource,
  EmptyRow,
  // diffusion
  InvalidParams,
  ShapeMismatch,
  DegenerateVariance,
  StepOutOfRange,
  ScheduleMismatch,
  WeightSumViolation,
  // warpgeom / lift
  EmptyList,
  EmptyHistory,
  AllMissing,
  NoOverlap,
  // metrics
  EmptyMask,
  TooSmall,
  LengthMismatch,
  DegenerateAlignment,
  EmptyErrors,
  // cli
  UnknownSubcommand,
  ConfigValidation,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnknownLabelId: return "UnknownLabelId";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::DegenerateTrajectory: return "DegenerateTrajectory";
    case ErrorCode::ConflictingOverride: return "ConflictingOverride";
    case ErrorCode::EmptyRowWithKeepSource: return "EmptyRowWithKeepSource";
    case ErrorCode::EmptyRow: return "EmptyRow";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::ScheduleMismatch: return "ScheduleMismatch";
    case ErrorCode::WeightSumViolation: return "WeightSumViolation";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::AllMissing: return "AllMissing";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateAlignment: return "DegenerateAlignment";
    case ErrorCode::EmptyErrors: return "EmptyErrors";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorCode::ConfigValidation: return "ConfigValidation";
  }
  return "Unknown";
}

/// Every failure raised by the engine. The message is prefixed with the code
/// name so CLI output can be grepped.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace restyle
