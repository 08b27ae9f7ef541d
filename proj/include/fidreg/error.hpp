#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fidreg {

enum class ErrorCode {
  kCollinearCorrespondences,
  kCountMismatch,
  kSingularCovariance,
  kRankDeficient,
  kDegenerateCluster,
  kEmptyCloud,
  kOutOfBounds,
  kNoSymmetricPair,
  kNoObservations,
  kMissingInitial,
  kIllPosedGraph,
  kNonFiniteCost,
  kDisconnectedInput,
  kLengthMismatch,
  kInvalidArgument,
  kParse,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kCollinearCorrespondences: return "CollinearCorrespondences";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kSingularCovariance: return "SingularCovariance";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kDegenerateCluster: return "DegenerateCluster";
    case ErrorCode::kEmptyCloud: return "EmptyCloud";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kNoSymmetricPair: return "NoSymmetricPair";
    case ErrorCode::kNoObservations: return "NoObservations";
    case ErrorCode::kMissingInitial: return "MissingInitial";
    case ErrorCode::kIllPosedGraph: return "IllPosedGraph";
    case ErrorCode::kNonFiniteCost: return "NonFiniteCost";
    case ErrorCode::kDisconnectedInput: return "DisconnectedInput";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

/// Exception type thrown by every fallible operation in the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Input validation failures (as opposed to pipeline failures).
  bool is_validation() const noexcept {
    switch (code_) {
      case ErrorCode::kInvalidArgument:
      case ErrorCode::kParse:
      case ErrorCode::kIo:
      case ErrorCode::kLengthMismatch:
      case ErrorCode::kCountMismatch:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace fidreg
