#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace analyze_rt {

/// Outcome of one code cell run inside a workspace session.
struct ExecutionResult {
  std::string stdout_text;
  std::string stderr_text;
  bool success = false;
  double duration_seconds = 0.0;
  bool truncated = false;
};

/// One adjacent Code/Execute pair of a trajectory.
struct InteractionTurn {
  std::size_t index = 0;
  std::string code;
  ExecutionResult result;
  bool success = false;
};

inline constexpr std::string_view kStderrSeparator = "[stderr]\n";

/// Execute-block body for a result: stdout, then a "[stderr]" line and stderr
/// when stderr is non-empty.
std::string render_feedback(const ExecutionResult& result);

/// Inverse of render_feedback for the stream split; success is not recoverable
/// from text and is left false.
ExecutionResult split_feedback(std::string_view body);

/// Keeps a head and a tail segment when text exceeds cap characters. The
/// head takes three quarters of the cap.
std::string truncate_head_tail(std::string_view text, std::size_t cap, bool* truncated = nullptr);

}  // namespace analyze_rt
