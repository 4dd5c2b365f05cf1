#pragma once

// Trajectory synthesis. Reasoning: distill a teacher trace, verify it against
// the reference answer, split it into Analyze/Understand parts, and refine it
// around sampled reasoning keywords. Interaction: a questioner writes a task
// and checklist over staged files, a solver runs an episode, an inspector
// checks the trajectory and file changes against the checklist.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "analyze_rt/agent_loop.hpp"
#include "analyze_rt/endpoint.hpp"
#include "analyze_rt/jsonl.hpp"
#include "analyze_rt/reward.hpp"
#include "analyze_rt/sandbox.hpp"

namespace analyze_rt::synthesis {

/// splitmix64 of (root, stream): independent, reproducible per-component seeds.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

enum SeedStream : std::uint64_t { kTaskTypeStream = 1, kKeywordStream = 2 };

struct KeywordVocabulary {
  std::vector<std::string> entries;
  int sample_count = 3;

  static KeywordVocabulary defaults();
  /// One phrase per line; blank lines and lines starting with '#' are skipped.
  static KeywordVocabulary from_file(const std::filesystem::path& path, int sample_count = 3);
  void validate() const;  // throws Error(InvalidConfig)
};

/// sample_count distinct entries, uniformly without replacement. Throws
/// Error(InvalidConfig) when sample_count exceeds the vocabulary.
std::vector<std::string> sample_keywords(const KeywordVocabulary& vocab, std::mt19937_64& rng);

struct Checklist {
  struct Interaction {
    std::optional<int> min_turns;
    std::optional<int> max_turns;
    std::vector<std::string> required_libraries;
  } interaction;
  struct Environment {
    std::vector<std::string> must_create;
    std::vector<std::string> must_not_modify;
  } environment;
};

Json checklist_to_json(const Checklist& c);
/// Throws Error(SchemaFailure) describing the first schema problem.
Checklist checklist_from_json(const Json& j);

enum class TaskType { DataPreparation, DataAnalysis, DataModeling, DataInsight, OpenEndedResearch };

inline constexpr std::array<TaskType, 5> kAllTaskTypes = {TaskType::DataPreparation, TaskType::DataAnalysis,
                                                          TaskType::DataModeling, TaskType::DataInsight,
                                                          TaskType::OpenEndedResearch};

std::string_view to_string(TaskType t);
std::optional<TaskType> task_type_from_name(std::string_view name);

/// weights: one per entry of kAllTaskTypes; empty means uniform.
TaskType sample_task_type(std::span<const double> weights, std::mt19937_64& rng);

struct SynthesisTask {
  TaskType task_type = TaskType::DataAnalysis;
  std::string problem;
  Checklist checklist;
  std::vector<DataSource> sources;
};

struct ReasoningSample {
  std::string instruction;
  std::string reference_answer;
  std::optional<std::string> distilled;
  std::optional<std::string> refined;
  std::optional<std::string> analyze_part;
  std::optional<std::string> understand_part;
  bool verified = false;
  std::vector<std::string> keywords;
  std::vector<std::string> flags;  // e.g. "unverified", "refine_skipped"
};

struct SynthesisConfig {
  int attempts = 3;  // per structured request (schema / keyword checks)
  RetryPolicy retry;
  MatcherConfig matcher;
};

/// Bodies of every <kind>...</kind> span found by plain search, tolerant of
/// surrounding prose.
std::vector<std::string> tagged_bodies(std::string_view text, ActionKind kind);

ReasoningSample distill(std::string instruction, std::string reference_answer, const ModelEndpoint& teacher,
                        const SynthesisConfig& cfg = {});

std::string build_refine_prompt(const ReasoningSample& sample, std::span<const std::string> keywords);

ReasoningSample keyword_refine(ReasoningSample sample, const KeywordVocabulary& vocab, const ModelEndpoint& teacher,
                               std::mt19937_64& rng, const SynthesisConfig& cfg = {});

std::string build_question_prompt(std::span<const std::string> file_names, TaskType task_type);

/// Throws Error(SchemaFailure) after cfg.attempts malformed replies.
SynthesisTask question(std::vector<DataSource> sources, TaskType task_type, const ModelEndpoint& questioner,
                       const SynthesisConfig& cfg = {});

struct SolveOptions {
  EpisodeConfig episode;
  ExecLimits limits;
  WorkspaceOptions workspace;
};

EpisodeResult solve(const SynthesisTask& task, const ModelEndpoint& solver, const SolveOptions& options);

struct Inspection {
  bool accepted = false;
  std::vector<std::string> failures;
};

/// Checks, in order: format validity, turn bounds, required libraries (by
/// substring in Code bodies), must_create files, must_not_modify files.
Inspection inspect(const EpisodeResult& result, const Checklist& checklist);

struct InteractionRecord {
  SynthesisTask task;
  EpisodeResult episode;
  Inspection inspection;
  std::string error;  // questioner/solver failure; such records are quarantined
};

struct ExportFilter {
  bool include_unverified = false;
};

struct StageCounts {
  std::size_t input = 0;
  std::size_t exported = 0;
  std::size_t quarantined = 0;
};

struct ExportManifest {
  StageCounts reasoning;
  StageCounts interaction;
  Json to_json() const;
};

inline constexpr std::string_view kReasoningFile = "reasoning.jsonl";
inline constexpr std::string_view kInteractionFile = "interaction.jsonl";
inline constexpr std::string_view kQuarantineFile = "quarantine.jsonl";
inline constexpr std::string_view kManifestFile = "manifest.json";

/// Writes the two dataset files, the quarantine file and the manifest under
/// sink_dir. Every input lands in exactly one of dataset or quarantine.
/// Throws Error(SinkFailure).
ExportManifest export_dataset(std::span<const ReasoningSample> reasoning, std::span<const InteractionRecord> episodes,
                              const ExportFilter& filter, const std::filesystem::path& sink_dir);

struct ReasoningInput {
  std::string instruction;
  std::string reference_answer;
};

std::vector<ReasoningSample> synthesize_reasoning(std::span<const ReasoningInput> inputs,
                                                  const ModelEndpoint& teacher, const KeywordVocabulary& vocab,
                                                  std::uint64_t seed, bool refine, const SynthesisConfig& cfg = {});

struct InteractionPlan {
  std::vector<DataSource> sources;
  std::size_t task_count = 1;
  std::vector<double> task_type_weights;  // empty = uniform
  std::size_t workers = 1;
};

std::vector<InteractionRecord> synthesize_interaction(const InteractionPlan& plan, const ModelEndpoint& questioner,
                                                      const ModelEndpoint& solver, const SolveOptions& options,
                                                      std::uint64_t seed, const SynthesisConfig& cfg = {});

}  // namespace analyze_rt::synthesis
