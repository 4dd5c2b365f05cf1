#pragma once

// Hybrid rewards: the format gate (-1), the reference-answer reward
// (acc + s_interaction) / 2, and the research reward
// (s_report + min(|T|/n_t, 1) + success_frac) / 3.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "analyze_rt/endpoint.hpp"
#include "analyze_rt/protocol.hpp"

namespace analyze_rt {

enum class RewardKind { FormatViolation, QA, Research };

std::string_view to_string(RewardKind kind);

struct RewardBreakdown {
  double total = 0.0;
  RewardKind kind = RewardKind::FormatViolation;
  std::map<std::string, double> components;
};

/// Returns the -1 breakdown for an invalid trajectory, nullopt otherwise.
std::optional<RewardBreakdown> format_gate(const Trajectory& trajectory);

struct MatcherConfig {
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
};

/// Normalized equality after trimming, ASCII case folding and whitespace
/// collapsing; numeric comparison when both sides parse as numbers.
int answer_match(std::string_view candidate, std::string_view reference, const MatcherConfig& cfg = {});

/// Fraction of successful interaction turns; 1.0 for a trajectory with no
/// turns that has an Answer.
double interaction_score(const Trajectory& trajectory);

/// Pure combination of the two reference-answer terms.
RewardBreakdown qa_reward_from_terms(int acc, double s_interaction);

/// Gated: returns the -1 breakdown for an invalid trajectory.
RewardBreakdown qa_reward(const Trajectory& trajectory, std::string_view reference_answer,
                          const MatcherConfig& cfg = {});

/// Pure combination of the three research terms.
RewardBreakdown research_reward_from_terms(double s_report, std::size_t turns, std::size_t successes, int n_t = 10);

struct JudgeScores {
  int usefulness = 0;
  int richness = 0;
  int soundness = 0;
  int interpretability = 0;
  int readability = 0;

  bool in_range() const;
};

/// (mean of the five scores - 1) / 4.
double normalize_report_score(const JudgeScores& scores);

/// Parses a (possibly fenced) JSON object with the five integer fields in
/// [1, 5]. Returns nullopt for anything else.
std::optional<JudgeScores> parse_judge_scores(std::string_view reply);

class ReportJudge {
 public:
  virtual ~ReportJudge() = default;
  /// Throws Error(JudgeFailure).
  virtual JudgeScores score(std::string_view report, std::string_view instruction) = 0;
  /// Raw text of the last judge reply, for the ledger.
  virtual std::string last_raw() const { return {}; }
};

/// Rubric prompt for the five report aspects, versioned with the artifact.
extern const std::string_view kReportRubricVersion;
std::string build_report_rubric_prompt(std::string_view report, std::string_view instruction);

/// Sends the rubric prompt; up to `attempts` tries on unparseable replies.
JudgeScores judge_report(std::string_view report, std::string_view instruction, const ModelEndpoint& endpoint,
                         int attempts = 3, const RetryPolicy& retry = {}, std::string* raw_out = nullptr);

class LlmReportJudge final : public ReportJudge {
 public:
  explicit LlmReportJudge(ModelEndpoint endpoint, int attempts = 3, RetryPolicy retry = {})
      : endpoint_(std::move(endpoint)), attempts_(attempts), retry_(retry) {}
  JudgeScores score(std::string_view report, std::string_view instruction) override;
  std::string last_raw() const override { return last_raw_; }

 private:
  ModelEndpoint endpoint_;
  int attempts_;
  RetryPolicy retry_;
  std::string last_raw_;
};

/// Gated. Judge failures propagate; no value is substituted.
RewardBreakdown research_reward(const Trajectory& trajectory, ReportJudge& judge, int n_t = 10);

/// One reward ledger line: {trajectory_id, kind, total, components, judge_raw?}.
void append_reward_record(const std::filesystem::path& ledger, std::string_view trajectory_id,
                          const RewardBreakdown& reward, const std::optional<std::string>& judge_raw = std::nullopt);

}  // namespace analyze_rt
