#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace swapnet {

enum class ErrorCode {
  DisconnectedGraph,
  DuplicateEdge,
  SelfLoop,
  UnknownNode,
  NegativeRate,
  SwapRateBoundExceeded,
  DegreeBoundExceeded,
  SameNode,
  DestinationTooClose,
  EmptyQueue,
  NonZeroAge,
  MissingEntry,
  InvalidConfig,
  InconsistentEvent,
  EventBudgetExceeded,
  TruncationTooLarge,
  MassLeakExceeded,
  RateBoundExceeded,
  EnsembleTooSmall,
  GridMismatch,
  NoContraction,
  WeightMismatch,
  ParseError,
  ValidationError,
  SpaceMismatch,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

  /// NoContraction and MassLeakExceeded are numerical failures; the CLI maps
  /// them to a distinct exit code.
  bool numerical() const noexcept {
    return code_ == ErrorCode::NoContraction || code_ == ErrorCode::MassLeakExceeded ||
           code_ == ErrorCode::EventBudgetExceeded;
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace swapnet
