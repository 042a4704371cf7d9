#pragma once

#include <stdexcept>
#include <string>

namespace ferret {

enum class ErrorCode {
  kOutOfBounds,
  kDegenerateRegion,
  kSizeMismatch,
  kEmptyMask,
  kOutOfRange,
  kShapeMismatch,
  kStaleTape,
  kMissingSlot,
  kUnknownTask,
  kMissingAlignment,
  kExhaustedVocabulary,
  kOverlappingRanges,
  kLengthMismatch,
  kInvalidArgument,
  kFormat,
  kIo,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kDegenerateRegion: return "DegenerateRegion";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kStaleTape: return "StaleTape";
    case ErrorCode::kMissingSlot: return "MissingSlot";
    case ErrorCode::kUnknownTask: return "UnknownTask";
    case ErrorCode::kMissingAlignment: return "MissingAlignment";
    case ErrorCode::kExhaustedVocabulary: return "ExhaustedVocabulary";
    case ErrorCode::kOverlappingRanges: return "OverlappingRanges";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kFormat: return "Format";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

// Every failure in the library surfaces as ferret::Error carrying a code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ferret
