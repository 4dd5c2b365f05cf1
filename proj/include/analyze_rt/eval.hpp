#pragma once

// Research-suite evaluation: tasks are run through the agent loop and the
// final answer is scored by a judge model on content and format.
//
// Suite layout: <suite>/<task_id>/task.json with
//   {"id", "category", "instruction", "checklist"}
// and the task's data files under <suite>/<task_id>/data/.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "analyze_rt/agent_loop.hpp"
#include "analyze_rt/jsonl.hpp"

namespace analyze_rt {

enum class ResearchCategory { DataPreparation, DataAnalysis, DataInsight, ReportGeneration, OpenEndedResearch };

inline constexpr std::array<ResearchCategory, 5> kAllResearchCategories = {
    ResearchCategory::DataPreparation, ResearchCategory::DataAnalysis, ResearchCategory::DataInsight,
    ResearchCategory::ReportGeneration, ResearchCategory::OpenEndedResearch};

std::string_view to_string(ResearchCategory c);
std::optional<ResearchCategory> research_category_from_name(std::string_view name);

struct ResearchTask {
  std::string id;
  ResearchCategory category = ResearchCategory::DataAnalysis;
  std::string instruction;
  std::vector<DataSource> sources;
  std::string checklist_text;
};

/// Loads every <suite>/<id>/task.json, sorted by id. Throws
/// Error(SchemaFailure) on a malformed task or a duplicate id.
std::vector<ResearchTask> load_suite(const std::filesystem::path& suite_dir);

struct EvalScore {
  std::string task_id;
  int content = 0;
  int format = 0;
  std::string judge_raw;
};

/// The judge template with {instruction}, {checklist} and {report} filled in
/// verbatim.
std::string build_judge_prompt(std::string_view instruction, std::string_view checklist_text,
                               std::string_view report);

struct ContentFormat {
  int content = 0;
  int format = 0;
};

/// First JSON object in the reply carrying integer "Content" and "Format" in
/// [1, 5]; fenced blocks are preferred over bare braces in prose.
std::optional<ContentFormat> parse_content_format(std::string_view reply);

/// True when the embedded judge template still hashes to its build-time value.
bool judge_template_intact();

struct EvalConfig {
  EpisodeConfig episode;
  ExecLimits limits;
  WorkspaceOptions workspace;
  std::size_t workers = 1;
  std::size_t judge_concurrency = 1;
  int judge_attempts = 3;
  RetryPolicy retry;
};

struct TaskOutcome {
  ResearchTask task;
  EpisodeResult episode;
  std::optional<EvalScore> score;
  std::string error;  // hard failure: workspace error or JudgeFailure

  bool hard_failed() const { return !score.has_value(); }
};

/// Runs every task; a failing task is recorded and the suite continues.
/// Throws Error(InvalidConfig) if the judge template was altered.
std::vector<TaskOutcome> run_suite(const std::vector<ResearchTask>& tasks, const ModelEndpoint& subject,
                                   const ModelEndpoint& judge, const EvalConfig& config);

struct CategorySummary {
  ResearchCategory category = ResearchCategory::DataAnalysis;
  std::size_t tasks = 0;
  std::size_t scored = 0;
  double content_mean = 0.0;
  double format_mean = 0.0;
};

struct SuiteSummary {
  std::vector<CategorySummary> categories;  // only categories present in the suite
  std::size_t tasks = 0;
  std::size_t scored = 0;
  std::size_t failed = 0;
  double content_mean = 0.0;  // over scored tasks, not over categories
  double format_mean = 0.0;

  Json to_json() const;
  std::string table() const;
};

SuiteSummary summarize(const std::vector<TaskOutcome>& outcomes);

Json outcome_to_json(const TaskOutcome& outcome);

}  // namespace analyze_rt
