#include "analyze_rt/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "analyze_rt/error.hpp"

namespace analyze_rt {

Json trajectory_to_json(const Trajectory& t) {
  Json blocks = Json::array();
  for (const auto& b : t.blocks) {
    blocks.push_back({{"kind", std::string(to_string(b.kind))}, {"body", b.body}});
  }
  Json j = {{"instruction", t.instruction}, {"blocks", std::move(blocks)}, {"metadata", t.metadata}};
  bool any_gap = false;
  for (const auto& g : t.gaps) any_gap = any_gap || !g.empty();
  if (any_gap) j["gaps"] = t.gaps;
  return j;
}

Trajectory trajectory_from_json(const Json& j) {
  Trajectory t;
  t.instruction = j.value("instruction", std::string());
  std::vector<std::string> stored_gaps;
  if (j.contains("gaps")) stored_gaps = j.at("gaps").get<std::vector<std::string>>();
  auto stored_gap = [&](std::size_t i) -> std::string {
    return i < stored_gaps.size() ? stored_gaps[i] : std::string();
  };

  std::size_t index = 0;
  t.append_text(stored_gap(0));
  for (const auto& jb : j.value("blocks", Json::array())) {
    const auto name = jb.at("kind").get<std::string>();
    const auto body = jb.value("body", std::string());
    if (auto kind = action_kind_from_name(name)) {
      t.append({*kind, body});
    } else {
      t.append_text("<" + name + ">" + body + "</" + name + ">");
    }
    ++index;
    t.append_text(stored_gap(index));
  }
  if (j.contains("metadata")) {
    for (const auto& [k, v] : j.at("metadata").items()) {
      t.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  // Keep the canonical empty form when there was no interstitial text.
  bool any_gap = false;
  for (const auto& g : t.gaps) any_gap = any_gap || !g.empty();
  if (!any_gap) t.gaps.clear();
  return t;
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<Json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void append_jsonl(const std::filesystem::path& path, const Json& row) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot append to " + path.string());
  out << row.dump() << '\n';
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string strip_trailing_commas(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      out.push_back(c);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\n' || text[j] == '\r')) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) continue;
    }
    out.push_back(c);
  }
  return out;
}

namespace {

std::optional<Json> try_object(std::string_view candidate) {
  auto parsed = Json::parse(strip_trailing_commas(candidate), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

struct Fence {
  std::string_view info;
  std::string_view content;
};

std::vector<Fence> fenced_blocks(std::string_view text) {
  std::vector<Fence> out;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    const auto info_end = text.find('\n', open + 3);
    if (info_end == std::string_view::npos) break;
    const auto close = text.find("```", info_end + 1);
    if (close == std::string_view::npos) break;
    out.push_back({text.substr(open + 3, info_end - open - 3), text.substr(info_end + 1, close - info_end - 1)});
    pos = close + 3;
  }
  return out;
}

// Balanced-brace spans, skipping braces inside string literals.
std::vector<std::string_view> brace_spans(std::string_view text) {
  std::vector<std::string_view> out;
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        out.push_back(text.substr(start, i - start + 1));
        break;
      }
    }
  }
  return out;
}

std::string_view trim_view(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<Json> extract_json_object(std::string_view text, const std::function<bool(const Json&)>& accept) {
  auto ok = [&](const std::optional<Json>& j) { return j && (!accept || accept(*j)); };

  const auto fences = fenced_blocks(text);
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& f : fences) {
      const bool is_json = trim_view(f.info) == "json";
      if ((pass == 0) != is_json) continue;
      auto j = try_object(trim_view(f.content));
      if (ok(j)) return j;
      for (auto span : brace_spans(f.content)) {
        auto inner = try_object(span);
        if (ok(inner)) return inner;
      }
    }
  }
  for (auto span : brace_spans(text)) {
    auto j = try_object(span);
    if (ok(j)) return j;
  }
  return std::nullopt;
}

}  // namespace analyze_rt
