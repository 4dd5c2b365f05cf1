#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace analyze_rt {

enum class ErrorCode {
  UnpairedCode,
  StagingFailure,
  SessionSpawnFailure,
  SessionDead,
  ModelError,
  JudgeFailure,
  InvalidConfig,
  SchemaFailure,
  SinkFailure,
  NonFiniteInput,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Runtime failure carrying a machine-checkable code. Every module throws this
/// type (parse errors have their own type in protocol.hpp).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace analyze_rt
