#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace facegen {

enum class ErrorKind {
  Persistence,
  CorruptDataset,
  InvalidLatent,
  CorruptModel,
  Version,
  Configuration,
  Shape,
  EmptyBatch,
  TrainingDiverged,
  EmptyDescription,
  UndefinedScore,
  InvalidSplit,
  EmptySplit,
  BackendUnavailable,
  InvalidRequest,
  SessionClosed,
  InvalidSelection,
  NotFound,
  ModelNotLoaded,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (the CLI,
/// the HTTP layer, tests) can dispatch on the error class without parsing
/// messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace facegen
