#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "analyze_rt/error.hpp"
#include "analyze_rt/jsonl.hpp"
#include "analyze_rt/reward.hpp"
#include "shared/fixtures.hpp"
#include "shared/support.hpp"

using namespace analyze_rt;

namespace {

// Code/Execute pairs; a turn fails when its feedback carries a traceback.
Trajectory with_turns(const std::vector<bool>& success, std::string answer = "report") {
  Trajectory t;
  t.instruction = "study the data";
  t.append({ActionKind::Analyze, "plan"});
  for (bool ok : success) {
    t.append({ActionKind::Code, "x"});
    t.append({ActionKind::Execute, ok ? "fine\n" : "[stderr]\nTraceback (most recent call last):\nValueError: bad\n"});
  }
  t.append({ActionKind::Answer, std::move(answer)});
  return t;
}

class FixedJudge final : public ReportJudge {
 public:
  explicit FixedJudge(JudgeScores s) : s_(s) {}
  JudgeScores score(std::string_view, std::string_view) override {
    ++calls;
    return s_;
  }
  int calls = 0;

 private:
  JudgeScores s_;
};

class FailingJudge final : public ReportJudge {
 public:
  JudgeScores score(std::string_view, std::string_view) override {
    throw Error(ErrorCode::JudgeFailure, "unreachable");
  }
};

JudgeScores uniform(int v) { return {v, v, v, v, v}; }

// Text that does not parse is kept as a single gap, as the agent loop does.
Trajectory from_text(const std::string& text) {
  try {
    return parse(text);
  } catch (const ParseError&) {
    Trajectory t;
    t.append_text(text);
    return t;
  }
}

}  // namespace

TEST_CASE("format gate") {
  Trajectory no_answer;
  no_answer.append({ActionKind::Analyze, "a"});
  const auto g = format_gate(no_answer);
  REQUIRE(g);
  CHECK(g->total == -1.0);
  CHECK(g->kind == RewardKind::FormatViolation);
  CHECK_FALSE(format_gate(with_turns({true})));

  FixedJudge judge(uniform(5));
  for (const auto& c : test_support::format_cases()) {
    CAPTURE(c.name);
    const auto t = from_text(c.text);
    if (c.expected.empty()) {
      CHECK(qa_reward(t, "42").total >= 0.0);
      continue;
    }
    CHECK(qa_reward(t, "42").total == -1.0);
    CHECK(research_reward(t, judge).total == -1.0);
  }
  // The gate runs before the judge is consulted.
  FixedJudge untouched(uniform(5));
  research_reward(no_answer, untouched);
  CHECK(untouched.calls == 0);
}

TEST_CASE("reference-answer reward grid") {
  CHECK(qa_reward_from_terms(1, 1.0).total == 1.0);
  CHECK(qa_reward_from_terms(0, 0.5).total == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(qa_reward_from_terms(1, 0.8).total == doctest::Approx(0.9).epsilon(1e-12));
  for (int acc : {0, 1}) {
    for (int k = 0; k <= 10; ++k) {
      const double s = k / 10.0;
      const double oracle = static_cast<double>(10 * acc + k) / 20.0;
      const auto r = qa_reward_from_terms(acc, s);
      CHECK(std::fabs(r.total - oracle) <= 1e-12);
      CHECK(r.total >= 0.0);
      CHECK(r.total <= 1.0);
      CHECK(r.components.at("acc") == acc);
    }
  }
  CHECK_THROWS_AS(qa_reward_from_terms(2, 0.5), Error);
  CHECK_THROWS_AS(qa_reward_from_terms(1, 1.5), Error);
}

TEST_CASE("research reward grid") {
  CHECK(research_reward_from_terms(1.0, 10, 10).total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(research_reward_from_terms(0.6, 5, 4).total == doctest::Approx(1.9 / 3.0).epsilon(1e-12));
  CHECK(std::fabs(research_reward_from_terms(0.6, 5, 4).total - 0.633333333333) < 1e-9);
  CHECK(research_reward_from_terms(0.9, 0, 0).total == doctest::Approx(0.3).epsilon(1e-12));

  // s_report values reachable from the judge: (sum - 5) / 20 for sums 5..25.
  for (int a = 0; a <= 20; ++a) {
    for (int turns = 0; turns <= 15; ++turns) {
      for (int succ = 0; succ <= turns; ++succ) {
        const double s = a / 20.0;
        double oracle;
        if (turns == 0) {
          oracle = static_cast<double>(a) / 60.0;
        } else {
          // Common denominator 1800*T.
          const long num = 30L * a * turns + 60L * std::min(turns, 10) * turns + 600L * succ;
          oracle = static_cast<double>(num) / (1800.0 * turns);
        }
        const auto r = research_reward_from_terms(s, turns, succ, 10);
        REQUIRE(std::fabs(r.total - oracle) <= 1e-12);
        CHECK(r.components.at("turn_term") == (turns >= 10 ? 1.0 : turns / 10.0));
      }
    }
  }
}

TEST_CASE("research reward is monotone") {
  for (int turns = 1; turns <= 12; ++turns) {
    for (int succ = 0; succ <= turns; ++succ) {
      for (int a = 0; a < 20; ++a) {
        CHECK(research_reward_from_terms((a + 1) / 20.0, turns, succ).total >=
              research_reward_from_terms(a / 20.0, turns, succ).total);
      }
      if (succ < turns) {
        CHECK(research_reward_from_terms(0.5, turns, succ + 1).total >
              research_reward_from_terms(0.5, turns, succ).total);
      }
    }
  }
  // More turns at a fixed success fraction, up to n_t.
  for (int turns = 1; turns < 10; ++turns) {
    CHECK(research_reward_from_terms(0.5, turns + 1, turns + 1).total >
          research_reward_from_terms(0.5, turns, turns).total);
  }
  CHECK(research_reward_from_terms(0.5, 11, 11).total == research_reward_from_terms(0.5, 10, 10).total);
}

TEST_CASE("research reward on trajectories") {
  FixedJudge judge(uniform(3));
  SUBCASE("zero turns") {
    Trajectory t;
    t.append({ActionKind::Analyze, "a"});
    t.append({ActionKind::Answer, "report"});
    const auto r = research_reward(t, judge);
    CHECK(r.components.at("success_frac") == 0.0);
    CHECK(r.total == doctest::Approx(0.5 / 3.0).epsilon(1e-12));
  }
  SUBCASE("five turns, four successful") {
    const auto r = research_reward(with_turns({true, true, false, true, true}), judge);
    CHECK(r.total == doctest::Approx((0.5 + 0.5 + 0.8) / 3.0).epsilon(1e-12));
  }
  SUBCASE("judge failures propagate") {
    FailingJudge bad;
    try {
      research_reward(with_turns({true}), bad);
      FAIL("expected JudgeFailure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::JudgeFailure);
    }
  }
}

TEST_CASE("interaction score") {
  CHECK(interaction_score(with_turns({true, true, true})) == 1.0);
  CHECK(interaction_score(with_turns({true, false, true, false})) == 0.5);
  CHECK(interaction_score(with_turns({})) == 1.0);

  auto t = with_turns({true, false});
  t.metadata["turn_success"] = "1,1";
  CHECK(interaction_score(t) == 1.0);
}

TEST_CASE("qa reward on trajectories") {
  CHECK(qa_reward(with_turns({true, false}, "42.0"), "42").total == doctest::Approx(0.75));
  CHECK(qa_reward(with_turns({true, false}, "41"), "42").total == doctest::Approx(0.25));
  CHECK(qa_reward(with_turns({}, " Paris "), "paris").total == 1.0);
}

TEST_CASE("answer matching") {
  CHECK(answer_match("42", "42.0") == 1);
  CHECK(answer_match("Paris", "Paris") == 1);
  CHECK(answer_match("Paris", "London") == 0);
  CHECK(answer_match("  New   York\n", "new york") == 1);
  CHECK(answer_match("1e3", "1000") == 1);
  CHECK(answer_match("+5", "5") == 1);
  CHECK(answer_match("100", "100.00001") == 1);
  CHECK(answer_match("100", "100.001") == 0);
  CHECK(answer_match("0", "1e-10") == 1);
  CHECK(answer_match("0", "1e-8") == 0);
  CHECK(answer_match("", "") == 1);
  CHECK(answer_match("nan", "nan") == 1);  // compared as text

  const std::vector<std::string> pool = {"1", "1.0", "2", "a", "A", " a ", "1e0", "b c", "B  C", "0.5", ".5", "x"};
  for (const auto& a : pool) {
    CHECK(answer_match(a, a) == 1);
    for (const auto& b : pool) CHECK(answer_match(a, b) == answer_match(b, a));
  }
}

TEST_CASE("judge score normalization and parsing") {
  CHECK(normalize_report_score(uniform(5)) == 1.0);
  CHECK(normalize_report_score(uniform(1)) == 0.0);
  CHECK(normalize_report_score(uniform(3)) == 0.5);
  CHECK(normalize_report_score({1, 2, 3, 4, 5}) == 0.5);

  const auto s = parse_judge_scores(
      "Review follows.\n```json\n{\"usefulness\": 4, \"richness\": 3, \"soundness\": 5, "
      "\"interpretability\": 2, \"readability\": 1}\n```");
  REQUIRE(s);
  CHECK(s->soundness == 5);
  CHECK(s->readability == 1);
  CHECK_FALSE(parse_judge_scores("no json here"));
  CHECK_FALSE(parse_judge_scores(
      R"({"usefulness": 6, "richness": 3, "soundness": 5, "interpretability": 2, "readability": 1})"));
  CHECK_FALSE(parse_judge_scores(R"({"usefulness": 4, "richness": 3, "soundness": 5, "interpretability": 2})"));
  CHECK_FALSE(parse_judge_scores(
      R"({"usefulness": 4.5, "richness": 3, "soundness": 5, "interpretability": 2, "readability": 1})"));
}

TEST_CASE("judge endpoint retries then fails") {
  const std::string good =
      R"({"usefulness": 3, "richness": 3, "soundness": 3, "interpretability": 3, "readability": 3})";
  SUBCASE("third reply parses") {
    auto model = test_support::scripted({"garbage", "{\"usefulness\": 9}", good});
    std::string raw;
    const auto s = judge_report("r", "q", model, 3, test_support::no_backoff(), &raw);
    CHECK(normalize_report_score(s) == 0.5);
    CHECK(raw == good);
    const auto reqs = std::dynamic_pointer_cast<ScriptedChatClient>(model.client)->requests();
    REQUIRE(reqs.size() == 3);
    const auto& prompt = reqs[0].messages.back().content;
    for (const char* aspect : {"usefulness", "richness", "soundness", "interpretability", "readability"}) {
      CHECK(prompt.find(aspect) != std::string::npos);
    }
  }
  SUBCASE("three bad replies") {
    auto model = test_support::scripted({"a", "b", "c", good});
    try {
      judge_report("r", "q", model, 3, test_support::no_backoff());
      FAIL("expected JudgeFailure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::JudgeFailure);
    }
  }
  SUBCASE("llm judge drives the research reward") {
    LlmReportJudge judge(test_support::scripted({good}), 3, test_support::no_backoff());
    const auto r = research_reward(with_turns({true, true}), judge);
    CHECK(r.total == doctest::Approx((0.5 + 0.2 + 1.0) / 3.0));
    CHECK(judge.last_raw() == good);
  }
}

TEST_CASE("reward ledger rows") {
  test_support::TempDir tmp("ledger");
  const auto path = tmp / "rewards.jsonl";
  append_reward_record(path, "t1", qa_reward_from_terms(1, 0.5));
  append_reward_record(path, "t2", research_reward_from_terms(0.5, 2, 1), std::string("{raw}"));
  const auto rows = read_jsonl(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("kind") == "QA");
  CHECK(rows[0].at("total").get<double>() == 0.75);
  CHECK_FALSE(rows[0].contains("judge_raw"));
  CHECK(rows[1].at("judge_raw") == "{raw}");
  CHECK(rows[1].at("components").contains("turn_term"));
}
