#include "analyze_rt/agent_loop.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "analyze_rt/error.hpp"
#include "analyze_rt/jsonl.hpp"

namespace analyze_rt {

const std::string_view kDefaultSystemPreamble =
    "You are a data science agent working autonomously in a sandboxed environment that holds the user's data "
    "files.\n"
    "{action_contract}\n"
    "Data files available in the working directory:\n"
    "{data_files}";

namespace {

constexpr std::string_view kActionContract =
    "Respond only with the following action blocks:\n"
    "<Analyze>...</Analyze>: plan, reason and reflect in text.\n"
    "<Understand>...</Understand>: inspect and describe the structure and contents of the data sources.\n"
    "<Code>...</Code>: Python code that interacts with the data; it runs as soon as </Code> is written.\n"
    "<Execute>...</Execute>: written by the environment with the output of the preceding code. Never write it "
    "yourself.\n"
    "<Answer>...</Answer>: the final output; it ends the task.\n";

std::vector<ChatMessage> prompt_from_text(std::string_view instruction, std::string_view serialized,
                                          std::span<const std::string> data_files, const EpisodeConfig& config) {
  // Single pass over the preamble so a file name can never be re-expanded.
  std::string system;
  const std::string_view tmpl = config.system_preamble;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto a = tmpl.find("{action_contract}", pos);
    const auto d = tmpl.find("{data_files}", pos);
    const auto hit = std::min(a, d);
    if (hit == std::string_view::npos) break;
    system.append(tmpl.substr(pos, hit - pos));
    if (hit == a) {
      system.append(kActionContract);
      pos = hit + std::string_view("{action_contract}").size();
    } else {
      system.append(format_file_listing(data_files));
      pos = hit + std::string_view("{data_files}").size();
    }
  }
  system.append(tmpl.substr(std::min(pos, tmpl.size())));

  std::vector<ChatMessage> messages;
  messages.push_back({"system", std::move(system)});
  messages.push_back({"user", std::string(instruction)});
  if (!serialized.empty()) messages.push_back({"assistant", std::string(serialized)});
  return messages;
}

bool needs_quotes(const std::string& name) {
  return std::any_of(name.begin(), name.end(), [](unsigned char c) { return std::isspace(c) || c == '"'; });
}

// Keeps the completion through the first Code/Answer close tag, the points
// where control must return to the runtime.
std::string cut_after_first_close(std::string_view text) {
  std::size_t cut = std::string_view::npos;
  std::size_t len = 0;
  for (std::string_view tag : {std::string_view("</Code>"), std::string_view("</Answer>")}) {
    const auto hit = text.find(tag);
    if (hit < cut) {
      cut = hit;
      len = tag.size();
    }
  }
  if (cut == std::string_view::npos) return std::string(text);
  return std::string(text.substr(0, cut + len));
}

std::string join_flags(const std::vector<bool>& flags) {
  std::string out;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (i) out.push_back(',');
    out.push_back(flags[i] ? '1' : '0');
  }
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

void EpisodeConfig::validate() const {
  if (max_actions <= 0 || max_turns <= 0 || max_total_chars == 0) {
    throw Error(ErrorCode::InvalidConfig, "episode bounds must be positive");
  }
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Answer: return "Answer";
    case Termination::MaxActions: return "MaxActions";
    case Termination::MaxTurns: return "MaxTurns";
    case Termination::Budget: return "Budget";
    case Termination::SessionDead: return "SessionDead";
    case Termination::ModelError: return "ModelError";
  }
  return "";
}

std::string format_file_listing(std::span<const std::string> names) {
  if (names.empty()) return "(none)\n";
  std::string out;
  for (const auto& n : names) {
    out += "- ";
    if (needs_quotes(n)) {
      out += '"';
      for (char c : n) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      out += '"';
    } else {
      out += n;
    }
    out += '\n';
  }
  return out;
}

std::vector<ChatMessage> build_prompt(std::string_view instruction, const Trajectory& so_far,
                                      std::span<const std::string> data_files, const EpisodeConfig& config) {
  return prompt_from_text(instruction, serialize(so_far), data_files, config);
}

EpisodeResult run_episode(std::string_view instruction, Workspace& workspace, const ModelEndpoint& endpoint,
                          const EpisodeConfig& config) {
  config.validate();
  EpisodeResult result;
  Trajectory& traj = result.trajectory;
  traj.instruction = std::string(instruction);
  const auto files = workspace.source_names();

  std::vector<std::size_t> call_offsets;
  std::vector<bool> turn_success;
  std::vector<std::string> violations;
  int turns = 0;
  const auto max_actions = static_cast<std::size_t>(config.max_actions);

  auto finish = [&](Termination how, std::string error = {}) -> EpisodeResult {
    result.terminated_by = how;
    result.error = std::move(error);
    traj.metadata["sources"] = Json(files).dump();
    traj.metadata["call_offsets"] = join_numbers(call_offsets);
    traj.metadata["turn_success"] = join_flags(turn_success);
    traj.metadata["terminated_by"] = std::string(to_string(how));
    traj.metadata["model"] = endpoint.spec.model_name;
    if (!violations.empty()) {
      std::string v;
      for (const auto& s : violations) v += (v.empty() ? "" : ";") + s;
      traj.metadata["format_violations"] = v;
    }
    if (!workspace.torn_down()) result.env_diff = snapshot_diff(workspace);
    return std::move(result);
  };

  while (true) {
    if (traj.blocks.size() >= max_actions || result.model_calls >= max_actions) return finish(Termination::MaxActions);
    const std::string text_so_far = serialize(traj);
    if (text_so_far.size() >= config.max_total_chars) return finish(Termination::Budget);

    call_offsets.push_back(text_so_far.size());
    auto request = endpoint.make_request(prompt_from_text(instruction, text_so_far, files, config));
    for (auto kind : {ActionKind::Code, ActionKind::Answer}) {
      const auto tag = closing_tag(kind);
      if (std::find(request.stop.begin(), request.stop.end(), tag) == request.stop.end()) request.stop.push_back(tag);
    }
    std::string completion;
    try {
      ++result.model_calls;
      completion = complete_with_retry(*endpoint.client, request, config.retry);
    } catch (const Error& e) {
      return finish(Termination::ModelError, e.what());
    }

    completion = cut_after_first_close(completion);
    Trajectory step;
    try {
      try {
        step = parse(completion);
      } catch (const ParseError& e) {
        // Server-side stop sequences drop the closing tag itself.
        if (e.code() != ParseErrorCode::UnclosedTag) throw;
        const auto tag_end = completion.find('>', e.offset());
        const auto kind = action_kind_from_name(completion.substr(e.offset() + 1, tag_end - e.offset() - 1));
        completion += closing_tag(*kind);
        step = parse(completion);
      }
    } catch (const ParseError& e) {
      violations.push_back("Unparseable@" + std::to_string(text_so_far.size() + e.offset()));
      traj.append_text(completion);
      continue;
    }

    for (std::size_t i = 0; i < step.blocks.size(); ++i) {
      traj.append_text(step.gap(i));
      auto& block = step.blocks[i];
      if (block.kind == ActionKind::Execute) {
        violations.push_back("ModelEmittedExecute@" + std::to_string(traj.blocks.size()));
        continue;
      }
      if (traj.blocks.size() >= max_actions) return finish(Termination::MaxActions);
      if (block.kind == ActionKind::Code) {
        if (turns >= config.max_turns) return finish(Termination::MaxTurns);
        const std::string code = block.body;
        traj.append(std::move(block));
        if (traj.blocks.size() >= max_actions) return finish(Termination::MaxActions);
        ExecutionResult exec;
        try {
          exec = execute(workspace, code);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::SessionDead) throw;
          return finish(Termination::SessionDead, e.what());
        }
        traj.append({ActionKind::Execute, render_feedback(exec)});
        turn_success.push_back(exec.success);
        ++turns;
        if (serialize(traj).size() > config.max_total_chars) return finish(Termination::Budget);
        continue;
      }
      const bool is_answer = block.kind == ActionKind::Answer;
      traj.append(std::move(block));
      if (is_answer) return finish(Termination::Answer);
    }
    traj.append_text(step.gap(step.blocks.size()));
  }
}

std::vector<std::vector<ChatMessage>> replay_prompts(const Trajectory& stored, const EpisodeConfig& config) {
  std::vector<std::string> files;
  if (const auto it = stored.metadata.find("sources"); it != stored.metadata.end()) {
    files = Json::parse(it->second).get<std::vector<std::string>>();
  }
  const std::string text = serialize(stored);
  std::vector<std::vector<ChatMessage>> prompts;
  const auto it = stored.metadata.find("call_offsets");
  if (it == stored.metadata.end()) return prompts;
  std::istringstream in(it->second);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    const auto offset = static_cast<std::size_t>(std::stoull(item));
    if (offset > text.size()) throw Error(ErrorCode::Io, "call offset beyond trajectory text");
    prompts.push_back(prompt_from_text(stored.instruction, std::string_view(text).substr(0, offset), files, config));
  }
  return prompts;
}

}  // namespace analyze_rt
