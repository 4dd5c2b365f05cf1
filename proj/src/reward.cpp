#include "analyze_rt/reward.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "analyze_rt/error.hpp"
#include "analyze_rt/jsonl.hpp"
#include "analyze_rt/templates.hpp"

namespace analyze_rt {

const std::string_view kReportRubricVersion = "report-rubric/v1";

std::string_view to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::FormatViolation: return "FormatViolation";
    case RewardKind::QA: return "QA";
    case RewardKind::Research: return "Research";
  }
  return "";
}

std::optional<RewardBreakdown> format_gate(const Trajectory& trajectory) {
  if (validate_format(trajectory).valid) return std::nullopt;
  return RewardBreakdown{-1.0, RewardKind::FormatViolation, {}};
}

namespace {

std::string normalize_answer(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

int answer_match(std::string_view candidate, std::string_view reference, const MatcherConfig& cfg) {
  const auto a = normalize_answer(candidate);
  const auto b = normalize_answer(reference);
  const auto x = parse_number(a);
  const auto y = parse_number(b);
  if (x && y) {
    const double scale = std::max(std::fabs(*x), std::fabs(*y));
    return std::fabs(*x - *y) <= std::max(cfg.rel_tol * scale, cfg.abs_tol) ? 1 : 0;
  }
  return a == b ? 1 : 0;
}

double interaction_score(const Trajectory& trajectory) {
  const auto turns = extract_turns(trajectory);
  if (turns.empty()) return trajectory.has_answer() ? 1.0 : 0.0;
  const auto ok = std::count_if(turns.begin(), turns.end(), [](const InteractionTurn& t) { return t.success; });
  return static_cast<double>(ok) / static_cast<double>(turns.size());
}

RewardBreakdown qa_reward_from_terms(int acc, double s_interaction) {
  if ((acc != 0 && acc != 1) || !(s_interaction >= 0.0 && s_interaction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "qa reward terms out of range");
  }
  RewardBreakdown r;
  r.kind = RewardKind::QA;
  r.total = (acc + s_interaction) / 2.0;
  r.components = {{"acc", static_cast<double>(acc)}, {"s_interaction", s_interaction}};
  return r;
}

RewardBreakdown qa_reward(const Trajectory& trajectory, std::string_view reference_answer, const MatcherConfig& cfg) {
  if (auto gated = format_gate(trajectory)) return *gated;
  const int acc = answer_match(trajectory.final_answer().value_or(""), reference_answer, cfg);
  return qa_reward_from_terms(acc, interaction_score(trajectory));
}

RewardBreakdown research_reward_from_terms(double s_report, std::size_t turns, std::size_t successes, int n_t) {
  if (n_t < 1) throw Error(ErrorCode::InvalidConfig, "n_t must be >= 1");
  if (!(s_report >= 0.0 && s_report <= 1.0)) throw Error(ErrorCode::InvalidConfig, "s_report outside [0,1]");
  if (successes > turns) throw Error(ErrorCode::InvalidConfig, "more successes than turns");
  const double turn_term = std::min(static_cast<double>(turns) / static_cast<double>(n_t), 1.0);
  // Zero turns: no successful interaction to credit.
  const double success_frac = turns == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(turns);
  RewardBreakdown r;
  r.kind = RewardKind::Research;
  r.total = (s_report + turn_term + success_frac) / 3.0;
  r.components = {{"s_report", s_report}, {"turn_term", turn_term}, {"success_frac", success_frac}};
  return r;
}

bool JudgeScores::in_range() const {
  for (int v : {usefulness, richness, soundness, interpretability, readability}) {
    if (v < 1 || v > 5) return false;
  }
  return true;
}

double normalize_report_score(const JudgeScores& s) {
  const double mean = (s.usefulness + s.richness + s.soundness + s.interpretability + s.readability) / 5.0;
  return (mean - 1.0) / 4.0;
}

std::optional<JudgeScores> parse_judge_scores(std::string_view reply) {
  static constexpr const char* kKeys[] = {"usefulness", "richness", "soundness", "interpretability", "readability"};
  auto accept = [](const Json& j) {
    for (const char* k : kKeys) {
      if (!j.contains(k) || !j.at(k).is_number_integer()) return false;
      const auto v = j.at(k).get<long long>();
      if (v < 1 || v > 5) return false;
    }
    return true;
  };
  const auto j = extract_json_object(reply, accept);
  if (!j) return std::nullopt;
  JudgeScores s;
  s.usefulness = j->at("usefulness").get<int>();
  s.richness = j->at("richness").get<int>();
  s.soundness = j->at("soundness").get<int>();
  s.interpretability = j->at("interpretability").get<int>();
  s.readability = j->at("readability").get<int>();
  return s;
}

std::string build_report_rubric_prompt(std::string_view report, std::string_view instruction) {
  return templates::render(templates::kReportRubric, {{"instruction", instruction}, {"report", report}});
}

JudgeScores judge_report(std::string_view report, std::string_view instruction, const ModelEndpoint& endpoint,
                         int attempts, const RetryPolicy& retry, std::string* raw_out) {
  const auto request = endpoint.make_request({{"user", build_report_rubric_prompt(report, instruction)}});
  std::string last;
  for (int i = 0; i < attempts; ++i) {
    try {
      last = complete_with_retry(*endpoint.client, request, retry);
    } catch (const Error& e) {
      throw Error(ErrorCode::JudgeFailure, std::string("judge unreachable: ") + e.what());
    }
    if (raw_out) *raw_out = last;
    if (auto scores = parse_judge_scores(last)) return *scores;
  }
  throw Error(ErrorCode::JudgeFailure,
              "no valid scores after " + std::to_string(attempts) + " attempts; last reply: " + last.substr(0, 200));
}

JudgeScores LlmReportJudge::score(std::string_view report, std::string_view instruction) {
  return judge_report(report, instruction, endpoint_, attempts_, retry_, &last_raw_);
}

RewardBreakdown research_reward(const Trajectory& trajectory, ReportJudge& judge, int n_t) {
  if (auto gated = format_gate(trajectory)) return *gated;
  const auto turns = extract_turns(trajectory);
  const auto successes = static_cast<std::size_t>(
      std::count_if(turns.begin(), turns.end(), [](const InteractionTurn& t) { return t.success; }));
  const auto scores = judge.score(trajectory.final_answer().value_or(""), trajectory.instruction);
  if (!scores.in_range()) throw Error(ErrorCode::JudgeFailure, "judge scores outside [1,5]");
  return research_reward_from_terms(normalize_report_score(scores), turns.size(), successes, n_t);
}

void append_reward_record(const std::filesystem::path& ledger, std::string_view trajectory_id,
                          const RewardBreakdown& reward, const std::optional<std::string>& judge_raw) {
  Json row = {{"trajectory_id", std::string(trajectory_id)},
              {"kind", std::string(to_string(reward.kind))},
              {"total", reward.total},
              {"components", reward.components}};
  if (judge_raw) row["judge_raw"] = *judge_raw;
  append_jsonl(ledger, row);
}

}  // namespace analyze_rt
