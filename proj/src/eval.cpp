#include "analyze_rt/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <semaphore>
#include <set>

#include "analyze_rt/error.hpp"
#include "analyze_rt/pool.hpp"
#include "analyze_rt/templates.hpp"

namespace fs = std::filesystem;

namespace analyze_rt {

std::string_view to_string(ResearchCategory c) {
  switch (c) {
    case ResearchCategory::DataPreparation: return "DataPreparation";
    case ResearchCategory::DataAnalysis: return "DataAnalysis";
    case ResearchCategory::DataInsight: return "DataInsight";
    case ResearchCategory::ReportGeneration: return "ReportGeneration";
    case ResearchCategory::OpenEndedResearch: return "OpenEndedResearch";
  }
  return "";
}

std::optional<ResearchCategory> research_category_from_name(std::string_view name) {
  for (auto c : kAllResearchCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

namespace {

ResearchTask load_task(const fs::path& dir) {
  const auto file = dir / "task.json";
  Json j;
  try {
    j = Json::parse(read_text_file(file));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::SchemaFailure, file.string() + ": " + e.what());
  }
  auto field = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key)) {
      if (required) throw Error(ErrorCode::SchemaFailure, file.string() + ": missing " + key);
      return {};
    }
    if (!j.at(key).is_string()) throw Error(ErrorCode::SchemaFailure, file.string() + ": " + key + " must be a string");
    return j.at(key).get<std::string>();
  };
  ResearchTask t;
  t.id = field("id", false);
  if (t.id.empty()) t.id = dir.filename().string();
  const auto category = field("category", true);
  const auto parsed = research_category_from_name(category);
  if (!parsed) throw Error(ErrorCode::SchemaFailure, file.string() + ": unknown category " + category);
  t.category = *parsed;
  t.instruction = field("instruction", true);
  t.checklist_text = field("checklist", false);

  const auto data = dir / "data";
  if (fs::is_directory(data)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(data)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) t.sources.push_back(DataSource::from_file(f));
  }
  return t;
}

}  // namespace

std::vector<ResearchTask> load_suite(const fs::path& suite_dir) {
  if (!fs::is_directory(suite_dir)) throw Error(ErrorCode::InvalidConfig, "no suite directory " + suite_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(suite_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "task.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<ResearchTask> tasks;
  std::set<std::string> ids;
  for (const auto& d : dirs) {
    auto t = load_task(d);
    if (!ids.insert(t.id).second) throw Error(ErrorCode::SchemaFailure, "duplicate task id " + t.id);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::string build_judge_prompt(std::string_view instruction, std::string_view checklist_text,
                               std::string_view report) {
  return templates::render(templates::kResearchJudgePrompt,
                           {{"instruction", instruction}, {"checklist", checklist_text}, {"report", report}});
}

namespace {

std::optional<int> score_field(const Json& o, const char* key) {
  if (!o.contains(key)) return std::nullopt;
  const auto& v = o.at(key);
  if (!v.is_number_integer()) return std::nullopt;
  const auto n = v.get<long long>();
  if (n < 1 || n > 5) return std::nullopt;
  return static_cast<int>(n);
}

}  // namespace

std::optional<ContentFormat> parse_content_format(std::string_view reply) {
  const auto obj = extract_json_object(reply, [](const Json& o) {
    return score_field(o, "Content").has_value() && score_field(o, "Format").has_value();
  });
  if (!obj) return std::nullopt;
  return ContentFormat{*score_field(*obj, "Content"), *score_field(*obj, "Format")};
}

bool judge_template_intact() {
  return sha256_hex(templates::kResearchJudgePrompt) == templates::kResearchJudgePromptSha256;
}

std::vector<TaskOutcome> run_suite(const std::vector<ResearchTask>& tasks, const ModelEndpoint& subject,
                                   const ModelEndpoint& judge, const EvalConfig& config) {
  if (!judge_template_intact()) throw Error(ErrorCode::InvalidConfig, "judge prompt template hash mismatch");
  config.episode.validate();
  config.limits.validate();
  if (config.judge_concurrency < 1) throw Error(ErrorCode::InvalidConfig, "judge concurrency must be >= 1");

  std::counting_semaphore<> judge_slots(static_cast<std::ptrdiff_t>(config.judge_concurrency));
  std::vector<TaskOutcome> out(tasks.size());
  parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
    auto& o = out[i];
    o.task = tasks[i];
    if (cancellation_requested()) {
      o.error = "interrupted";
      return;
    }
    try {
      auto opts = config.workspace;
      opts.id_prefix = "eval-" + o.task.id;
      auto ws = create_workspace(o.task.sources, config.limits, opts);
      o.episode = run_episode(o.task.instruction, ws, subject, config.episode);
      teardown(ws);
    } catch (const Error& e) {
      o.error = e.what();
      return;
    }

    // A run without an Answer is judged on an empty report.
    const auto report = o.episode.trajectory.final_answer().value_or("");
    const auto request = judge.make_request({{"user", build_judge_prompt(o.task.instruction, o.task.checklist_text,
                                                                          report)}});
    std::string last_raw;
    for (int attempt = 0; attempt < config.judge_attempts; ++attempt) {
      try {
        judge_slots.acquire();
        try {
          last_raw = complete_with_retry(*judge.client, request, config.retry);
        } catch (...) {
          judge_slots.release();
          throw;
        }
        judge_slots.release();
      } catch (const Error& e) {
        o.error = std::string("JudgeFailure: ") + e.what();
        return;
      }
      if (const auto s = parse_content_format(last_raw)) {
        o.score = EvalScore{o.task.id, s->content, s->format, last_raw};
        return;
      }
    }
    o.error = "JudgeFailure: no valid Content/Format scores after " + std::to_string(config.judge_attempts) +
              " attempts; last reply: " + last_raw.substr(0, 200);
  });
  return out;
}

SuiteSummary summarize(const std::vector<TaskOutcome>& outcomes) {
  SuiteSummary s;
  std::map<ResearchCategory, CategorySummary> by_cat;
  double content_sum = 0.0;
  double format_sum = 0.0;
  for (const auto& o : outcomes) {
    ++s.tasks;
    auto& c = by_cat[o.task.category];
    c.category = o.task.category;
    ++c.tasks;
    if (!o.score) {
      ++s.failed;
      continue;
    }
    ++s.scored;
    ++c.scored;
    c.content_mean += o.score->content;
    c.format_mean += o.score->format;
    content_sum += o.score->content;
    format_sum += o.score->format;
  }
  for (auto cat : kAllResearchCategories) {
    auto it = by_cat.find(cat);
    if (it == by_cat.end()) continue;
    auto c = it->second;
    if (c.scored > 0) {
      c.content_mean /= static_cast<double>(c.scored);
      c.format_mean /= static_cast<double>(c.scored);
    }
    s.categories.push_back(c);
  }
  if (s.scored > 0) {
    s.content_mean = content_sum / static_cast<double>(s.scored);
    s.format_mean = format_sum / static_cast<double>(s.scored);
  }
  return s;
}

Json SuiteSummary::to_json() const {
  Json cats = Json::array();
  for (const auto& c : categories) {
    cats.push_back({{"category", std::string(to_string(c.category))},
                    {"tasks", c.tasks},
                    {"scored", c.scored},
                    {"content_mean", c.content_mean},
                    {"format_mean", c.format_mean}});
  }
  return {{"categories", std::move(cats)}, {"tasks", tasks},         {"scored", scored},
          {"failed", failed},              {"content_mean", content_mean}, {"format_mean", format_mean}};
}

std::string SuiteSummary::table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %6s %7s %8s %8s\n", "category", "tasks", "scored", "content", "format");
  out += line;
  for (const auto& c : categories) {
    std::snprintf(line, sizeof line, "%-20s %6zu %7zu %8.3f %8.3f\n", std::string(to_string(c.category)).c_str(),
                  c.tasks, c.scored, c.content_mean, c.format_mean);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-20s %6zu %7zu %8.3f %8.3f\n", "overall", tasks, scored, content_mean,
                format_mean);
  out += line;
  return out;
}

Json outcome_to_json(const TaskOutcome& o) {
  Json j = {{"task_id", o.task.id},
            {"category", std::string(to_string(o.task.category))},
            {"terminated_by", std::string(to_string(o.episode.terminated_by))},
            {"trajectory", trajectory_to_json(o.episode.trajectory)}};
  if (o.score) {
    j["content"] = o.score->content;
    j["format"] = o.score->format;
    j["judge_raw"] = o.score->judge_raw;
  } else {
    j["content"] = nullptr;
    j["format"] = nullptr;
    j["error"] = o.error;
  }
  return j;
}

}  // namespace analyze_rt
