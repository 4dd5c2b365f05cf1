#include "analyze_rt/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "analyze_rt/error.hpp"

namespace analyze_rt {

namespace {

constexpr std::string_view kTracebackMarker = "Traceback (most recent call last):";
constexpr std::string_view kTimeoutMarker = "[timeout]";
constexpr std::size_t kMaxKindNameLength = 10;  // "Understand"

struct TagMatch {
  ActionKind kind;
  bool closing;
  std::size_t length;
};

// Recognizes one of the ten action tags starting at text[pos] == '<'.
std::optional<TagMatch> match_tag(std::string_view text, std::size_t pos) {
  std::size_t i = pos + 1;
  bool closing = false;
  if (i < text.size() && text[i] == '/') {
    closing = true;
    ++i;
  }
  const std::size_t name_start = i;
  while (i < text.size() && i - name_start <= kMaxKindNameLength &&
         std::isalpha(static_cast<unsigned char>(text[i]))) {
    ++i;
  }
  if (i >= text.size() || text[i] != '>') return std::nullopt;
  auto kind = action_kind_from_name(text.substr(name_start, i - name_start));
  if (!kind) return std::nullopt;
  return TagMatch{*kind, closing, i + 1 - pos};
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// Scans interstitial text: tag-shaped tokens naming an unknown kind are
// UnknownTag, any other non-whitespace is StrayText (reported once per gap).
void check_gap(std::string_view gap, std::size_t base_offset, std::vector<FormatViolation>& out) {
  bool stray_reported = false;
  std::size_t i = 0;
  while (i < gap.size()) {
    const unsigned char c = static_cast<unsigned char>(gap[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '<') {
      std::size_t j = i + 1;
      if (j < gap.size() && gap[j] == '/') ++j;
      const std::size_t name_start = j;
      while (j < gap.size() && (std::isalnum(static_cast<unsigned char>(gap[j])) || gap[j] == '_')) ++j;
      if (j > name_start && j < gap.size() && gap[j] == '>' &&
          std::isalpha(static_cast<unsigned char>(gap[name_start]))) {
        if (!action_kind_from_name(gap.substr(name_start, j - name_start))) {
          out.push_back({ViolationCode::UnknownTag, base_offset + i});
          i = j + 1;
          continue;
        }
      }
    }
    if (!stray_reported) {
      out.push_back({ViolationCode::StrayText, base_offset + i});
      stray_reported = true;
    }
    ++i;
  }
}

}  // namespace

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::Analyze: return "Analyze";
    case ActionKind::Understand: return "Understand";
    case ActionKind::Code: return "Code";
    case ActionKind::Execute: return "Execute";
    case ActionKind::Answer: return "Answer";
  }
  return "";
}

std::optional<ActionKind> action_kind_from_name(std::string_view name) {
  for (ActionKind k : kAllActionKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string opening_tag(ActionKind kind) { return "<" + std::string(to_string(kind)) + ">"; }
std::string closing_tag(ActionKind kind) { return "</" + std::string(to_string(kind)) + ">"; }

std::string_view to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::UnknownTag: return "UnknownTag";
    case ViolationCode::UnclosedTag: return "UnclosedTag";
    case ViolationCode::NestedTag: return "NestedTag";
    case ViolationCode::CodeWithoutExecute: return "CodeWithoutExecute";
    case ViolationCode::ExecuteWithoutCode: return "ExecuteWithoutCode";
    case ViolationCode::NoAnswer: return "NoAnswer";
    case ViolationCode::MultipleAnswer: return "MultipleAnswer";
    case ViolationCode::ContentAfterAnswer: return "ContentAfterAnswer";
    case ViolationCode::StrayText: return "StrayText";
  }
  return "";
}

void Trajectory::append(ActionBlock block) {
  if (gaps.empty()) gaps.assign(blocks.size() + 1, std::string());
  blocks.push_back(std::move(block));
  gaps.emplace_back();
}

void Trajectory::append_text(std::string_view text) {
  if (text.empty()) return;
  if (gaps.empty()) gaps.assign(blocks.size() + 1, std::string());
  gaps.back().append(text);
}

std::string_view Trajectory::gap(std::size_t i) const {
  if (i >= gaps.size()) return {};
  return gaps[i];
}

std::size_t Trajectory::count(ActionKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(blocks.begin(), blocks.end(), [kind](const ActionBlock& b) { return b.kind == kind; }));
}

std::optional<std::string> Trajectory::final_answer() const {
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    if (it->kind == ActionKind::Answer) return it->body;
  }
  return std::nullopt;
}

bool same_text_form(const Trajectory& a, const Trajectory& b) {
  if (a.blocks != b.blocks) return false;
  for (std::size_t i = 0; i <= a.blocks.size(); ++i) {
    if (a.gap(i) != b.gap(i)) return false;
  }
  return true;
}

ParseError::ParseError(ParseErrorCode code, std::size_t offset)
    : std::runtime_error(std::string(code == ParseErrorCode::UnclosedTag ? "UnclosedTag" : "NestedTag") +
                         " at offset " + std::to_string(offset)),
      code_(code),
      offset_(offset) {}

Trajectory parse(std::string_view text) {
  Trajectory out;
  std::string pending_gap;
  std::size_t pos = 0;
  std::size_t gap_start = 0;
  bool any_gap_text = false;

  while (pos < text.size()) {
    const std::size_t lt = text.find('<', pos);
    if (lt == std::string_view::npos) break;
    const auto open = match_tag(text, lt);
    if (!open || open->closing) {
      pos = lt + 1;
      continue;
    }
    // Opening tag: everything since the previous block is interstitial.
    std::string gap(text.substr(gap_start, lt - gap_start));
    any_gap_text = any_gap_text || !gap.empty();
    out.gaps.push_back(std::move(gap));

    const std::size_t body_start = lt + open->length;
    std::size_t scan = body_start;
    std::optional<std::size_t> body_end;
    std::size_t after = 0;
    while (scan < text.size()) {
      const std::size_t inner = text.find('<', scan);
      if (inner == std::string_view::npos) break;
      const auto tag = match_tag(text, inner);
      if (!tag) {
        scan = inner + 1;
        continue;
      }
      if (tag->closing && tag->kind == open->kind) {
        body_end = inner;
        after = inner + tag->length;
        break;
      }
      throw ParseError(ParseErrorCode::NestedTag, inner);
    }
    if (!body_end) throw ParseError(ParseErrorCode::UnclosedTag, lt);

    out.blocks.push_back({open->kind, std::string(text.substr(body_start, *body_end - body_start))});
    pos = after;
    gap_start = after;
  }
  std::string tail(text.substr(std::min(gap_start, text.size())));
  any_gap_text = any_gap_text || !tail.empty();
  out.gaps.push_back(std::move(tail));
  if (!any_gap_text) out.gaps.clear();
  return out;
}

std::string serialize(const Trajectory& trajectory) {
  std::string out;
  std::size_t reserve = 0;
  for (const auto& g : trajectory.gaps) reserve += g.size();
  for (const auto& b : trajectory.blocks) reserve += b.body.size() + 24;
  out.reserve(reserve);
  for (std::size_t i = 0; i < trajectory.blocks.size(); ++i) {
    out.append(trajectory.gap(i));
    const auto& b = trajectory.blocks[i];
    out.append(opening_tag(b.kind));
    out.append(b.body);
    out.append(closing_tag(b.kind));
  }
  out.append(trajectory.gap(trajectory.blocks.size()));
  return out;
}

bool FormatVerdict::has(ViolationCode code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [code](const FormatViolation& v) { return v.code == code; });
}

FormatVerdict validate_format(const Trajectory& t) {
  FormatVerdict verdict;
  auto& v = verdict.violations;
  const auto& blocks = t.blocks;

  std::size_t offset = 0;
  for (std::size_t i = 0; i <= blocks.size(); ++i) {
    const auto gap = t.gap(i);
    if (!is_blank(gap)) check_gap(gap, offset, v);
    offset += gap.size();
    if (i < blocks.size()) {
      offset += opening_tag(blocks[i].kind).size() + blocks[i].body.size() + closing_tag(blocks[i].kind).size();
    }
  }

  std::optional<std::size_t> first_answer;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    switch (blocks[i].kind) {
      case ActionKind::Code:
        if (i + 1 >= blocks.size() || blocks[i + 1].kind != ActionKind::Execute) {
          v.push_back({ViolationCode::CodeWithoutExecute, i});
        }
        break;
      case ActionKind::Execute:
        if (i == 0 || blocks[i - 1].kind != ActionKind::Code) {
          v.push_back({ViolationCode::ExecuteWithoutCode, i});
        }
        break;
      case ActionKind::Answer:
        if (!first_answer) {
          first_answer = i;
        } else {
          v.push_back({ViolationCode::MultipleAnswer, i});
        }
        break;
      default:
        break;
    }
  }
  if (!first_answer) {
    v.push_back({ViolationCode::NoAnswer, blocks.size()});
  } else if (*first_answer + 1 < blocks.size()) {
    v.push_back({ViolationCode::ContentAfterAnswer, *first_answer + 1});
  }
  verdict.valid = v.empty();
  return verdict;
}

FormatVerdict validate_text(std::string_view text) {
  try {
    return validate_format(parse(text));
  } catch (const ParseError& e) {
    FormatVerdict verdict;
    verdict.valid = false;
    verdict.violations.push_back(
        {e.code() == ParseErrorCode::UnclosedTag ? ViolationCode::UnclosedTag : ViolationCode::NestedTag,
         e.offset()});
    return verdict;
  }
}

namespace {

std::vector<bool> recorded_turn_success(const Trajectory& t) {
  std::vector<bool> flags;
  const auto it = t.metadata.find("turn_success");
  if (it == t.metadata.end()) return flags;
  std::istringstream in(it->second);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    flags.push_back(item == "1" || item == "true");
  }
  return flags;
}

}  // namespace

std::vector<InteractionTurn> extract_turns(const Trajectory& t) {
  const auto recorded = recorded_turn_success(t);
  std::vector<InteractionTurn> turns;
  for (std::size_t i = 0; i < t.blocks.size(); ++i) {
    if (t.blocks[i].kind != ActionKind::Code) continue;
    if (i + 1 >= t.blocks.size() || t.blocks[i + 1].kind != ActionKind::Execute) {
      throw Error(ErrorCode::UnpairedCode, "Code block " + std::to_string(i) + " has no following Execute");
    }
    InteractionTurn turn;
    turn.index = turns.size();
    turn.code = t.blocks[i].body;
    const auto& body = t.blocks[i + 1].body;
    turn.result = split_feedback(body);
    if (turn.index < recorded.size()) {
      turn.result.success = recorded[turn.index];
    } else {
      turn.result.success = body.find(kTracebackMarker) == std::string::npos &&
                            body.find(kTimeoutMarker) == std::string::npos;
    }
    turn.success = turn.result.success;
    turns.push_back(std::move(turn));
  }
  return turns;
}

std::size_t count_turns(const Trajectory& t) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < t.blocks.size(); ++i) {
    if (t.blocks[i].kind == ActionKind::Code && t.blocks[i + 1].kind == ActionKind::Execute) ++n;
  }
  return n;
}

}  // namespace analyze_rt
