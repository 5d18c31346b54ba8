#pragma once

#include <stdexcept>
#include <string>

namespace dicex {

enum class ErrorCode {
  InvalidArgument,
  MissingColumn,
  UnparseableValue,
  UnknownCategory,
  OutOfRange,
  InvalidSchema,
  InsufficientClassRows,
  DimensionMismatch,
  TrainingFailure,
  NonFiniteLoss,
  EmptyInput,
  DegenerateDifferences,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnparseableValue: return "UnparseableValue";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::InsufficientClassRows: return "InsufficientClassRows";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TrainingFailure: return "TrainingFailure";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateDifferences: return "DegenerateDifferences";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// All library failures are reported through this type; `code()` is stable,
// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace dicex
