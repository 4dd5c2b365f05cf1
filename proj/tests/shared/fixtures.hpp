#pragma once

#include <random>
#include <string>
#include <vector>

#include "analyze_rt/protocol.hpp"

namespace test_support {

using analyze_rt::ActionKind;
using analyze_rt::ViolationCode;

inline bool contains_action_tag(const std::string& s) {
  for (auto k : analyze_rt::kAllActionKinds) {
    if (s.find(analyze_rt::opening_tag(k)) != std::string::npos) return true;
    if (s.find(analyze_rt::closing_tag(k)) != std::string::npos) return true;
  }
  return false;
}

// Bodies mix prose, newlines and angle brackets that never spell an action tag.
inline std::string random_body(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {
      "x", "df", " ", "\n", "<", ">", "/", "a < b", "c > d", "<b>", "</div>", "<Analyz", "Code>", "</Cod",
      "<code>", "<answer>", "print(1)", "\t", "&lt;", "Answer", "{\"k\": [1, 2]}", "é", "<<", ">>", "</"};
  std::uniform_int_distribution<int> len(0, 12);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  while (true) {
    std::string body;
    for (int i = len(rng); i > 0; --i) body += pieces[pick(rng)];
    if (!contains_action_tag(body)) return body;
  }
}

inline std::string random_gap(std::mt19937_64& rng) {
  static const std::vector<std::string> gaps = {"", "", "", "\n", "\n\n", " ", "\t\n"};
  std::uniform_int_distribution<std::size_t> pick(0, gaps.size() - 1);
  return gaps[pick(rng)];
}

/// Well-formed text form: 5-40 blocks of any kind with optional whitespace gaps.
inline analyze_rt::Trajectory random_trajectory(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nblocks(5, 40);
  std::uniform_int_distribution<std::size_t> kind(0, analyze_rt::kAllActionKinds.size() - 1);
  analyze_rt::Trajectory t;
  const int n = nblocks(rng);
  std::vector<std::string> gaps;
  for (int i = 0; i < n; ++i) {
    gaps.push_back(random_gap(rng));
    t.blocks.push_back({analyze_rt::kAllActionKinds[kind(rng)], random_body(rng)});
  }
  gaps.push_back(random_gap(rng));
  bool any = false;
  for (const auto& g : gaps) any = any || !g.empty();
  if (any) t.gaps = gaps;
  return t;
}

/// The same trajectory written out by hand-rolled concatenation.
inline std::string reference_text(const analyze_rt::Trajectory& t) {
  std::string s;
  for (std::size_t i = 0; i < t.blocks.size(); ++i) {
    if (!t.gaps.empty()) s += t.gaps[i];
    const auto name = std::string(analyze_rt::to_string(t.blocks[i].kind));
    s += "<" + name + ">" + t.blocks[i].body + "</" + name + ">";
  }
  if (!t.gaps.empty()) s += t.gaps.back();
  return s;
}

struct FormatCase {
  const char* name;
  std::string text;
  std::vector<analyze_rt::FormatViolation> expected;  // empty = valid
};

inline const std::string kA = "<Analyze>plan</Analyze>";  // 23 chars
inline const std::string kU = "<Understand>cols</Understand>";
inline const std::string kC = "<Code>x=1</Code>";
inline const std::string kE = "<Execute>ok</Execute>";
inline const std::string kAns = "<Answer>42</Answer>";  // 19 chars

inline std::vector<FormatCase> format_cases() {
  using V = ViolationCode;
  return {
      {"valid_full", kA + kC + kE + kAns, {}},
      {"valid_answer_only", kAns, {}},
      {"valid_two_turns_with_newlines", kU + "\n" + kA + "\n" + kC + "\n" + kE + "\n" + kC + "\n" + kE + "\n" + kAns + "\n",
       {}},
      {"valid_angle_brackets_in_bodies",
       "<Code>if a<b and c>d: pass</Code><Execute></Execute><Answer>a <b> c</Answer>", {}},
      {"no_answer", kA + kC + kE, {{V::NoAnswer, 3}}},
      {"empty_text", "", {{V::NoAnswer, 0}}},
      {"multiple_answer", kA + kAns + kAns, {{V::MultipleAnswer, 2}, {V::ContentAfterAnswer, 2}}},
      {"unpaired_code_before_answer", kA + kC + kAns, {{V::CodeWithoutExecute, 1}}},
      {"unpaired_code_at_end", kC, {{V::CodeWithoutExecute, 0}, {V::NoAnswer, 1}}},
      {"code_code_execute", kC + kC + kE + kAns, {{V::CodeWithoutExecute, 0}}},
      {"execute_without_code", kA + kE + kAns, {{V::ExecuteWithoutCode, 1}}},
      {"execute_first", kE + kAns, {{V::ExecuteWithoutCode, 0}}},
      {"unknown_tag_between_blocks", kA + "<Plan>x</Plan>" + kAns,
       {{V::UnknownTag, 23}, {V::StrayText, 29}, {V::UnknownTag, 30}}},
      {"unknown_tag_leading", "<Thought>hi</Thought>" + kAns,
       {{V::UnknownTag, 0}, {V::StrayText, 9}, {V::UnknownTag, 11}}},
      {"lowercase_answer_is_unknown", "<answer>42</answer>",
       {{V::UnknownTag, 0}, {V::StrayText, 8}, {V::UnknownTag, 10}, {V::NoAnswer, 0}}},
      {"content_after_answer", kA + kAns + kA, {{V::ContentAfterAnswer, 2}}},
      {"turn_after_answer", kAns + kC + kE, {{V::ContentAfterAnswer, 1}}},
      {"stray_text_before", "hello " + kAns, {{V::StrayText, 0}}},
      {"stray_text_after_answer", kAns + "bye", {{V::StrayText, 19}}},
      {"stray_comparison_in_gap", "a < b" + kAns, {{V::StrayText, 0}}},
      {"unclosed_code", kA + "<Code>print(1)", {{V::UnclosedTag, 23}}},
      {"nested_code_in_analyze", "<Analyze>a<Code>b</Code></Analyze>" + kAns, {{V::NestedTag, 10}}},
  };
}

}  // namespace test_support
