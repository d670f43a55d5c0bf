#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace acq {

enum class ErrorKind {
  kInvalidArgument,
  kUndefinedSignal,  // metric has no defined value for the input (e.g. one class)
  kInfeasible,
  kNonFinite,
  kIo,
  kSchemaMismatch,
  kNumerical,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void Require(bool condition, const std::string& message) {
  if (!condition) Fail(ErrorKind::kInvalidArgument, message);
}

inline std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kUndefinedSignal: return "undefined_signal";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kNonFinite: return "non_finite";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kSchemaMismatch: return "schema_mismatch";
    case ErrorKind::kNumerical: return "numerical";
  }
  return "unknown";
}

}  // namespace acq
