#pragma once

// Run configuration: a YAML file plus ANALYZE_RT_<SECTION>_<KEY> environment
// overrides. Relative paths in the file resolve against the file's directory.
//
//   run_dir: runs/demo
//   seed: 7
//   endpoints:
//     subject: {base_url: http://localhost:8000/v1, model: m, api_key_env: KEY}
//     solver: {alias: subject}
//     teacher: {script: teacher.jsonl}
//   sandbox: {timeout_seconds: 120, output_cap: 4096, runner: "python3 -u shim.py"}
//   episode: {max_actions: 30, max_turns: 10, max_total_chars: 262144}
//   reward: {rel_tol: 1e-6, abs_tol: 1e-9, n_t: 10}
//   grpo: {clip_epsilon: 0.2, kl_beta: 0.04, std_epsilon: 1e-8}
//   synthesis: {vocabulary: kw.txt, keyword_count: 3, task_type_weights: [1,1,1,1,1]}
//   eval: {workers: 2, judge_concurrency: 1, judge_attempts: 3}

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "analyze_rt/agent_loop.hpp"
#include "analyze_rt/grpo.hpp"
#include "analyze_rt/reward.hpp"

namespace analyze_rt {

inline constexpr std::array<std::string_view, 7> kEndpointRoles = {
    "subject", "teacher", "questioner", "solver", "inspector-judge", "report-judge", "eval-judge"};

struct EndpointConfig {
  std::string alias;  // another role name; all other fields are then ignored
  std::string base_url;
  std::string model;
  SamplingParams sampling;
  std::vector<std::string> stop;
  std::string api_key_env;
  std::filesystem::path script;  // scripted completions (JSONL) instead of HTTP
};

struct SynthesisSettings {
  std::filesystem::path vocabulary;  // empty = built-in vocabulary
  int keyword_count = 3;
  std::vector<double> task_type_weights;
  std::size_t workers = 1;
  int attempts = 3;
  bool refine = true;
};

struct EvalSettings {
  std::size_t workers = 1;
  std::size_t judge_concurrency = 1;
  int judge_attempts = 3;
};

struct RunConfig {
  std::filesystem::path run_dir = "runs";
  std::uint64_t seed = 0;
  std::map<std::string, EndpointConfig> endpoints;
  ExecLimits sandbox;
  std::vector<std::string> runner_command;  // empty = default_runner_command()
  bool allow_network = false;
  bool retain_workspaces = false;
  EpisodeConfig episode;
  MatcherConfig matcher;
  int n_t = 10;
  int judge_attempts = 3;
  grpo::GrpoConfig grpo;
  SynthesisSettings synthesis;
  EvalSettings eval;
  RetryPolicy retry;

  /// Builds a client per configured role; aliases share their target's
  /// client. Throws Error(InvalidConfig) on dangling or cyclic aliases.
  void resolve_endpoints(const std::function<std::optional<std::string>(const std::string&)>& env);
  /// Throws Error(InvalidConfig) for a role that is not configured.
  ModelEndpoint endpoint(const std::string& role) const;
  bool has_endpoint(const std::string& role) const;
  WorkspaceOptions workspace_options() const;
  void validate() const;

 private:
  std::map<std::string, ModelEndpoint> resolved_;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Loads the file (if any), applies environment overrides, validates.
/// Throws Error(InvalidConfig).
RunConfig load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env = process_env);

}  // namespace analyze_rt
