#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "analyze_rt/protocol.hpp"

namespace analyze_rt {

using Json = nlohmann::json;

/// Trajectory record: {instruction, blocks: [{kind, body}], metadata}. A
/// "gaps" array is added only when interstitial text exists.
Json trajectory_to_json(const Trajectory& t);

/// Blocks whose kind is not one of the five are kept as their literal tag
/// text in the interstitial gap, so the validator reports UnknownTag.
Trajectory trajectory_from_json(const Json& j);

/// Reads one JSON value per non-empty line. Throws Error(Io) naming the line
/// on malformed input.
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);
void append_jsonl(const std::filesystem::path& path, const Json& row);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Finds a JSON object in free-form model output. Candidates are tried in
/// order: ```json fenced blocks, other fenced blocks, then balanced {...}
/// spans of the raw text. Trailing commas are tolerated. Returns the first
/// candidate object for which accept() holds.
std::optional<Json> extract_json_object(std::string_view text,
                                        const std::function<bool(const Json&)>& accept = {});

/// Removes commas that directly precede a closing brace or bracket outside of
/// string literals.
std::string strip_trailing_commas(std::string_view text);

}  // namespace analyze_rt
