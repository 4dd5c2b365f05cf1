#pragma once

// The inference loop: ask the model for the next action, run Code blocks in
// the workspace, feed the output back as an Execute block, stop on Answer.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "analyze_rt/endpoint.hpp"
#include "analyze_rt/protocol.hpp"
#include "analyze_rt/sandbox.hpp"

namespace analyze_rt {

/// Template placeholders: {action_contract} and {data_files}.
extern const std::string_view kDefaultSystemPreamble;

struct EpisodeConfig {
  int max_actions = 30;
  int max_turns = 10;
  std::size_t max_total_chars = 262144;
  std::string system_preamble = std::string(kDefaultSystemPreamble);
  RetryPolicy retry;

  void validate() const;  // throws Error(InvalidConfig)
};

enum class Termination { Answer, MaxActions, MaxTurns, Budget, SessionDead, ModelError };

std::string_view to_string(Termination t);

struct EpisodeResult {
  Trajectory trajectory;
  Termination terminated_by = Termination::ModelError;
  EnvDiff env_diff;
  std::string error;  // set for SessionDead / ModelError
  std::size_t model_calls = 0;
};

/// "- name" per line; names containing whitespace or quotes are quoted.
std::string format_file_listing(std::span<const std::string> names);

/// Messages for the next model call: system (preamble with the action
/// contract and file listing), user (instruction), and, once the trajectory
/// is non-empty, an assistant message holding its serialized text.
std::vector<ChatMessage> build_prompt(std::string_view instruction, const Trajectory& so_far,
                                      std::span<const std::string> data_files, const EpisodeConfig& config);

/// Metadata written on the trajectory: "sources" (JSON array of file names),
/// "call_offsets" (serialized-text length before each model call), "turn_success",
/// "terminated_by", "model", and "format_violations" when the model emitted
/// Execute blocks or unparseable text.
EpisodeResult run_episode(std::string_view instruction, Workspace& workspace, const ModelEndpoint& endpoint,
                          const EpisodeConfig& config);

/// Rebuilds the exact prompt of every recorded model call of a stored
/// trajectory from its "call_offsets" and "sources" metadata.
std::vector<std::vector<ChatMessage>> replay_prompts(const Trajectory& stored, const EpisodeConfig& config);

}  // namespace analyze_rt
