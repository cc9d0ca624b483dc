#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dilatron {

enum class ErrorCode {
  NonSquare,
  NegativeOffDiagonal,
  NegativeEntry,
  RowSumNonzero,
  InvalidRate,
  NegativeTime,
  TailMassTooLarge,
  TooLarge,
  TooLargeForDenseCoupling,
  OutOfRange,
  WindowTooSmall,
  MalformedConfiguration,
  MalformedTrajectory,
  OverlappingTimes,
  DimensionMismatch,
  NotSelfAdjoint,
  InvalidLaw,
  NotBijective,
  ParseError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::NegativeOffDiagonal: return "NegativeOffDiagonal";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::RowSumNonzero: return "RowSumNonzero";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::NegativeTime: return "NegativeTime";
    case ErrorCode::TailMassTooLarge: return "TailMassTooLarge";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::TooLargeForDenseCoupling: return "TooLargeForDenseCoupling";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::WindowTooSmall: return "WindowTooSmall";
    case ErrorCode::MalformedConfiguration: return "MalformedConfiguration";
    case ErrorCode::MalformedTrajectory: return "MalformedTrajectory";
    case ErrorCode::OverlappingTimes: return "OverlappingTimes";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSelfAdjoint: return "NotSelfAdjoint";
    case ErrorCode::InvalidLaw: return "InvalidLaw";
    case ErrorCode::NotBijective: return "NotBijective";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code so
/// callers (the CLI in particular) can report it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dilatron
