#include "analyze_rt/execution.hpp"

#include <string>

#include "analyze_rt/error.hpp"

namespace analyze_rt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnpairedCode: return "UnpairedCode";
    case ErrorCode::StagingFailure: return "StagingFailure";
    case ErrorCode::SessionSpawnFailure: return "SessionSpawnFailure";
    case ErrorCode::SessionDead: return "SessionDead";
    case ErrorCode::ModelError: return "ModelError";
    case ErrorCode::JudgeFailure: return "JudgeFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SchemaFailure: return "SchemaFailure";
    case ErrorCode::SinkFailure: return "SinkFailure";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string render_feedback(const ExecutionResult& result) {
  std::string out = result.stdout_text;
  if (!result.stderr_text.empty()) {
    if (!out.empty() && out.back() != '\n') out.push_back('\n');
    out.append(kStderrSeparator);
    out.append(result.stderr_text);
  }
  return out;
}

ExecutionResult split_feedback(std::string_view body) {
  ExecutionResult r;
  // The separator always starts a line.
  std::size_t pos = std::string_view::npos;
  if (body.starts_with(kStderrSeparator)) {
    pos = 0;
  } else {
    const std::string needle = "\n" + std::string(kStderrSeparator);
    const auto hit = body.find(needle);
    if (hit != std::string_view::npos) pos = hit + 1;
  }
  if (pos == std::string_view::npos) {
    r.stdout_text = std::string(body);
    return r;
  }
  r.stdout_text = std::string(body.substr(0, pos));
  r.stderr_text = std::string(body.substr(pos + kStderrSeparator.size()));
  return r;
}

std::string truncate_head_tail(std::string_view text, std::size_t cap, bool* truncated) {
  if (text.size() <= cap) {
    if (truncated) *truncated = false;
    return std::string(text);
  }
  if (truncated) *truncated = true;
  const std::size_t head = cap * 3 / 4;
  const std::size_t tail = cap - head;
  const std::size_t dropped = text.size() - head - tail;
  std::string out;
  out.reserve(cap + 64);
  out.append(text.substr(0, head));
  out.append("\n...[truncated " + std::to_string(dropped) + " chars]...\n");
  out.append(text.substr(text.size() - tail));
  return out;
}

}  // namespace analyze_rt
