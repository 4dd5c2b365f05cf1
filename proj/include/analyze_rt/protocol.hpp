#pragma once

// Five-action block grammar: parser, serializer and format validator.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "analyze_rt/execution.hpp"

namespace analyze_rt {

enum class ActionKind { Analyze, Understand, Code, Execute, Answer };

inline constexpr std::array<ActionKind, 5> kAllActionKinds = {
    ActionKind::Analyze, ActionKind::Understand, ActionKind::Code, ActionKind::Execute,
    ActionKind::Answer};

std::string_view to_string(ActionKind kind);
std::optional<ActionKind> action_kind_from_name(std::string_view name);
std::string opening_tag(ActionKind kind);
std::string closing_tag(ActionKind kind);

struct ActionBlock {
  ActionKind kind;
  std::string body;

  bool operator==(const ActionBlock&) const = default;
};

struct Trajectory {
  std::string instruction;
  std::vector<ActionBlock> blocks;
  // Text outside blocks. Either empty (no interstitial text at all) or exactly
  // blocks.size() + 1 entries: before the first block, between blocks, after
  // the last one.
  std::vector<std::string> gaps;
  std::map<std::string, std::string> metadata;

  void append(ActionBlock block);
  /// Appends raw text after the last block.
  void append_text(std::string_view text);
  std::string_view gap(std::size_t i) const;
  std::size_t count(ActionKind kind) const;
  bool has_answer() const { return count(ActionKind::Answer) > 0; }
  /// Body of the last Answer block, if any.
  std::optional<std::string> final_answer() const;
};

/// Blocks and interstitial text are identical (instruction and metadata are
/// not part of the text form).
bool same_text_form(const Trajectory& a, const Trajectory& b);

enum class ParseErrorCode { UnclosedTag, NestedTag };

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorCode code, std::size_t offset);
  ParseErrorCode code() const noexcept { return code_; }
  /// Character offset of the offending tag.
  std::size_t offset() const noexcept { return offset_; }

 private:
  ParseErrorCode code_;
  std::size_t offset_;
};

/// Single-pass parse of model/session text into blocks plus interstitial gaps.
/// A '<' that does not begin one of the ten action tags is literal text.
/// Throws ParseError.
Trajectory parse(std::string_view text);

std::string serialize(const Trajectory& trajectory);

enum class ViolationCode {
  UnknownTag,
  UnclosedTag,
  NestedTag,
  CodeWithoutExecute,
  ExecuteWithoutCode,
  NoAnswer,
  MultipleAnswer,
  ContentAfterAnswer,
  StrayText,
};

std::string_view to_string(ViolationCode code);

struct FormatViolation {
  ViolationCode code;
  // Block index for block-sequence rules, character offset into the
  // serialized text for UnknownTag/StrayText/parse errors.
  std::size_t position = 0;

  bool operator==(const FormatViolation&) const = default;
};

struct FormatVerdict {
  bool valid = true;
  std::vector<FormatViolation> violations;

  bool has(ViolationCode code) const;
};

FormatVerdict validate_format(const Trajectory& trajectory);

/// Parses then validates; parse errors become a single violation.
FormatVerdict validate_text(std::string_view text);

/// One turn per adjacent (Code, Execute) pair. Per-turn success is read from
/// the "turn_success" metadata written by the agent loop when present, and
/// otherwise inferred from the Execute body (no traceback, no timeout note).
/// Throws Error(UnpairedCode) when a Code block is not followed by Execute.
std::vector<InteractionTurn> extract_turns(const Trajectory& trajectory);

/// Number of adjacent (Code, Execute) pairs; never throws.
std::size_t count_turns(const Trajectory& trajectory);

}  // namespace analyze_rt
