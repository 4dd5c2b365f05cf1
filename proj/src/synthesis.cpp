#include "analyze_rt/synthesis.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>

#include "analyze_rt/error.hpp"
#include "analyze_rt/pool.hpp"

namespace analyze_rt::synthesis {

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

KeywordVocabulary KeywordVocabulary::defaults() {
  return {{"but", "wait", "What happens at the boundaries?", "Let's review the prior reasoning",
           "Let's take a closer look at the table"},
          3};
}

KeywordVocabulary KeywordVocabulary::from_file(const std::filesystem::path& path, int sample_count) {
  KeywordVocabulary v;
  v.sample_count = sample_count;
  std::istringstream in(read_text_file(path));
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    v.entries.push_back(line.substr(start));
  }
  v.validate();
  return v;
}

void KeywordVocabulary::validate() const {
  if (entries.empty()) throw Error(ErrorCode::InvalidConfig, "keyword vocabulary is empty");
  if (sample_count < 1) throw Error(ErrorCode::InvalidConfig, "keyword sample count must be >= 1");
  if (static_cast<std::size_t>(sample_count) > entries.size()) {
    throw Error(ErrorCode::InvalidConfig, "cannot sample " + std::to_string(sample_count) +
                                              " keywords from a vocabulary of " + std::to_string(entries.size()));
  }
}

std::vector<std::string> sample_keywords(const KeywordVocabulary& vocab, std::mt19937_64& rng) {
  vocab.validate();
  const auto k = static_cast<std::size_t>(vocab.sample_count);
  // Partial Fisher-Yates over indices.
  std::vector<std::size_t> idx(vocab.entries.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(vocab.entries[idx[i]]);
  }
  return out;
}

Json checklist_to_json(const Checklist& c) {
  Json inter = {{"required_libraries", c.interaction.required_libraries}};
  if (c.interaction.min_turns) inter["min_turns"] = *c.interaction.min_turns;
  if (c.interaction.max_turns) inter["max_turns"] = *c.interaction.max_turns;
  return {{"interaction", std::move(inter)},
          {"environment",
           {{"must_create", c.environment.must_create}, {"must_not_modify", c.environment.must_not_modify}}}};
}

namespace {

std::vector<std::string> string_list(const Json& parent, const char* key, const char* where) {
  if (!parent.contains(key)) return {};
  const auto& arr = parent.at(key);
  if (!arr.is_array()) throw Error(ErrorCode::SchemaFailure, std::string(where) + "." + key + " must be an array");
  std::vector<std::string> out;
  for (const auto& v : arr) {
    if (!v.is_string()) throw Error(ErrorCode::SchemaFailure, std::string(where) + "." + key + " must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::optional<int> optional_count(const Json& parent, const char* key) {
  if (!parent.contains(key) || parent.at(key).is_null()) return std::nullopt;
  const auto& v = parent.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw Error(ErrorCode::SchemaFailure, std::string("interaction.") + key + " must be a non-negative integer");
  }
  return v.get<int>();
}

std::string fold(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    // U+2019 (right single quotation mark) folds to an ASCII apostrophe.
    if (s.compare(i, 3, "\xE2\x80\x99") == 0) {
      out.push_back('\'');
      i += 2;
      continue;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
  }
  return out;
}

std::string join(std::span<const std::string> xs, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out.append(sep);
    out.append(xs[i]);
  }
  return out;
}

}  // namespace

Checklist checklist_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaFailure, "checklist must be an object");
  Checklist c;
  if (j.contains("interaction")) {
    const auto& in = j.at("interaction");
    if (!in.is_object()) throw Error(ErrorCode::SchemaFailure, "interaction must be an object");
    c.interaction.min_turns = optional_count(in, "min_turns");
    c.interaction.max_turns = optional_count(in, "max_turns");
    c.interaction.required_libraries = string_list(in, "required_libraries", "interaction");
  }
  if (j.contains("environment")) {
    const auto& env = j.at("environment");
    if (!env.is_object()) throw Error(ErrorCode::SchemaFailure, "environment must be an object");
    c.environment.must_create = string_list(env, "must_create", "environment");
    c.environment.must_not_modify = string_list(env, "must_not_modify", "environment");
  }
  if (c.interaction.min_turns && c.interaction.max_turns && *c.interaction.min_turns > *c.interaction.max_turns) {
    throw Error(ErrorCode::SchemaFailure, "min_turns exceeds max_turns");
  }
  for (const auto* list : {&c.environment.must_create, &c.environment.must_not_modify}) {
    for (const auto& name : *list) {
      if (!is_bare_filename(name)) throw Error(ErrorCode::SchemaFailure, "not a bare filename: " + name);
    }
  }
  return c;
}

std::string_view to_string(TaskType t) {
  switch (t) {
    case TaskType::DataPreparation: return "DataPreparation";
    case TaskType::DataAnalysis: return "DataAnalysis";
    case TaskType::DataModeling: return "DataModeling";
    case TaskType::DataInsight: return "DataInsight";
    case TaskType::OpenEndedResearch: return "OpenEndedResearch";
  }
  return "";
}

std::optional<TaskType> task_type_from_name(std::string_view name) {
  for (auto t : kAllTaskTypes) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

namespace {

std::string_view task_type_phrase(TaskType t) {
  switch (t) {
    case TaskType::DataPreparation: return "data preparation";
    case TaskType::DataAnalysis: return "data analysis";
    case TaskType::DataModeling: return "data modeling";
    case TaskType::DataInsight: return "data insight";
    case TaskType::OpenEndedResearch: return "open-ended data research";
  }
  return "";
}

}  // namespace

TaskType sample_task_type(std::span<const double> weights, std::mt19937_64& rng) {
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(kAllTaskTypes.size(), 1.0);
  if (w.size() != kAllTaskTypes.size()) throw Error(ErrorCode::InvalidConfig, "need one weight per task type");
  if (std::any_of(w.begin(), w.end(), [](double x) { return !(x >= 0.0); }) ||
      std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) {
    throw Error(ErrorCode::InvalidConfig, "task type weights must be non-negative and not all zero");
  }
  std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
  return kAllTaskTypes[dist(rng)];
}

std::vector<std::string> tagged_bodies(std::string_view text, ActionKind kind) {
  const auto open = opening_tag(kind);
  const auto close = closing_tag(kind);
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto a = text.find(open, pos);
    if (a == std::string_view::npos) break;
    const auto b = text.find(close, a + open.size());
    if (b == std::string_view::npos) break;
    out.emplace_back(text.substr(a + open.size(), b - a - open.size()));
    pos = b + close.size();
  }
  return out;
}

namespace {

constexpr std::string_view kTeacherSystem =
    "You are an expert data analyst who reasons carefully about tables and structured data.";

std::string last_or_empty(const std::vector<std::string>& xs) { return xs.empty() ? std::string() : xs.back(); }

std::string joined_bodies(std::string_view text, ActionKind kind) {
  const auto parts = tagged_bodies(text, kind);
  return join(parts, "\n");
}

}  // namespace

ReasoningSample distill(std::string instruction, std::string reference_answer, const ModelEndpoint& teacher,
                        const SynthesisConfig& cfg) {
  ReasoningSample s;
  s.instruction = std::move(instruction);
  s.reference_answer = std::move(reference_answer);

  const std::string ask = s.instruction +
                          "\n\nReason through the problem step by step inside <Analyze>...</Analyze>, then give only "
                          "the final answer inside <Answer>...</Answer>.";
  const auto trace = complete_with_retry(*teacher.client, teacher.make_request({{"system", std::string(kTeacherSystem)},
                                                                                 {"user", ask}}),
                                         cfg.retry);
  s.distilled = trace;
  const auto answers = tagged_bodies(trace, ActionKind::Answer);
  if (answers.empty()) s.flags.push_back("no_answer");
  s.verified = !answers.empty() && answer_match(answers.back(), s.reference_answer, cfg.matcher) == 1;
  if (!s.verified) {
    s.flags.push_back("unverified");
    return s;
  }

  const std::string reformulate =
      "Rewrite the reasoning below into two parts. Put the reasoning process inside <Analyze>...</Analyze>. Put "
      "what the reasoning establishes about the structure and contents of the data inside "
      "<Understand>...</Understand>. Keep every fact and step.\n\n[QUESTION]\n" +
      s.instruction + "\n\n[REASONING]\n" + joined_bodies(trace, ActionKind::Analyze);
  const auto parts = complete_with_retry(
      *teacher.client, teacher.make_request({{"system", std::string(kTeacherSystem)}, {"user", reformulate}}),
      cfg.retry);
  const auto analyze = tagged_bodies(parts, ActionKind::Analyze);
  const auto understand = tagged_bodies(parts, ActionKind::Understand);
  if (analyze.empty() || understand.empty()) {
    s.flags.push_back("reformulation_incomplete");
    s.analyze_part = joined_bodies(trace, ActionKind::Analyze);
    s.understand_part = join(understand, "\n");
  } else {
    s.analyze_part = join(analyze, "\n");
    s.understand_part = join(understand, "\n");
  }
  return s;
}

std::string build_refine_prompt(const ReasoningSample& sample, std::span<const std::string> keywords) {
  std::string p =
      "Refine the reasoning below so that it focuses on the data itself. Work each of the following phrases into "
      "the reasoning verbatim, and let each one open a step that re-examines the data:\n";
  for (const auto& k : keywords) p += "- " + k + "\n";
  p += "\n[QUESTION]\n" + sample.instruction + "\n\n[REASONING]\n";
  p += sample.analyze_part.value_or(sample.distilled.value_or(""));
  if (sample.understand_part && !sample.understand_part->empty()) p += "\n" + *sample.understand_part;
  p +=
      "\n\nReturn the refined reasoning inside <Analyze>...</Analyze>, the data understanding inside "
      "<Understand>...</Understand>, and the final answer inside <Answer>...</Answer>.";
  return p;
}

ReasoningSample keyword_refine(ReasoningSample sample, const KeywordVocabulary& vocab, const ModelEndpoint& teacher,
                               std::mt19937_64& rng, const SynthesisConfig& cfg) {
  if (!sample.distilled) throw Error(ErrorCode::InvalidConfig, "keyword_refine needs a distilled trace");
  sample.keywords = sample_keywords(vocab, rng);
  const auto request = teacher.make_request(
      {{"system", std::string(kTeacherSystem)}, {"user", build_refine_prompt(sample, sample.keywords)}});

  std::optional<std::string> reply;
  for (int attempt = 0; attempt < cfg.attempts && !reply; ++attempt) {
    auto text = complete_with_retry(*teacher.client, request, cfg.retry);
    const auto folded = fold(text);
    const bool has_all = std::all_of(sample.keywords.begin(), sample.keywords.end(),
                                     [&](const std::string& k) { return folded.find(fold(k)) != std::string::npos; });
    if (has_all) reply = std::move(text);
  }
  if (!reply) {
    sample.flags.push_back("refine_skipped");
    return sample;
  }
  const auto answer = last_or_empty(tagged_bodies(*reply, ActionKind::Answer));
  if (answer_match(answer, sample.reference_answer, cfg.matcher) != 1) {
    sample.flags.push_back("refine_unverified");
    return sample;
  }
  sample.refined = *reply;
  if (auto a = joined_bodies(*reply, ActionKind::Analyze); !a.empty()) sample.analyze_part = a;
  if (auto u = joined_bodies(*reply, ActionKind::Understand); !u.empty()) sample.understand_part = u;
  return sample;
}

std::string build_question_prompt(std::span<const std::string> file_names, TaskType task_type) {
  std::string p = "You design realistic data science tasks grounded in the data files below.\n\nData files:\n";
  p += format_file_listing(file_names);
  p += "\nTask type: " + std::string(task_type_phrase(task_type)) + "\n\n";
  p +=
      "Write one task of this type that can only be solved by working with these files, together with a "
      "checklist for verifying a solution. Reply with a single JSON object in a ```json fenced block with this "
      "shape:\n"
      "```json\n"
      "{\"problem\": \"<task text that names the files it uses>\",\n"
      " \"checklist\": {\"interaction\": {\"min_turns\": <int or null>, \"max_turns\": <int or null>, "
      "\"required_libraries\": [\"<python library>\"]},\n"
      "               \"environment\": {\"must_create\": [\"<output file name>\"], \"must_not_modify\": "
      "[\"<input file name>\"]}}}\n"
      "```";
  return p;
}

namespace {

// File names with common data extensions mentioned in the problem text must
// be staged sources or declared outputs.
void check_problem_references(const std::string& problem, const std::vector<DataSource>& sources,
                              const Checklist& checklist) {
  static const std::regex kFileRef(R"(([A-Za-z0-9_][A-Za-z0-9_.\-]*\.(csv|tsv|xlsx|xls|json|jsonl|parquet|sqlite|db|xml)))",
                                   std::regex::icase);
  std::set<std::string> allowed;
  for (const auto& s : sources) allowed.insert(s.name);
  for (const auto& n : checklist.environment.must_create) allowed.insert(n);
  for (auto it = std::sregex_iterator(problem.begin(), problem.end(), kFileRef); it != std::sregex_iterator(); ++it) {
    const auto name = (*it)[1].str();
    if (!allowed.count(name)) throw Error(ErrorCode::SchemaFailure, "problem references unstaged file " + name);
  }
}

}  // namespace

SynthesisTask question(std::vector<DataSource> sources, TaskType task_type, const ModelEndpoint& questioner,
                       const SynthesisConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& s : sources) names.push_back(s.name);
  const auto request = questioner.make_request({{"user", build_question_prompt(names, task_type)}});

  std::string last_problem = "no reply";
  for (int attempt = 0; attempt < cfg.attempts; ++attempt) {
    const auto reply = complete_with_retry(*questioner.client, request, cfg.retry);
    const auto j = extract_json_object(reply, [](const Json& o) { return o.contains("problem"); });
    if (!j) {
      last_problem = "no JSON object with a problem field";
      continue;
    }
    try {
      if (!j->at("problem").is_string() || j->at("problem").get<std::string>().empty()) {
        throw Error(ErrorCode::SchemaFailure, "problem must be a non-empty string");
      }
      SynthesisTask task;
      task.task_type = task_type;
      task.problem = j->at("problem").get<std::string>();
      task.checklist = checklist_from_json(j->value("checklist", Json::object()));
      check_problem_references(task.problem, sources, task.checklist);
      task.sources = std::move(sources);
      return task;
    } catch (const Error& e) {
      last_problem = e.what();
    }
  }
  throw Error(ErrorCode::SchemaFailure,
              "questioner failed after " + std::to_string(cfg.attempts) + " attempts: " + last_problem);
}

EpisodeResult solve(const SynthesisTask& task, const ModelEndpoint& solver, const SolveOptions& options) {
  auto ws = create_workspace(task.sources, options.limits, options.workspace);
  auto result = run_episode(task.problem, ws, solver, options.episode);
  teardown(ws);
  return result;
}

Inspection inspect(const EpisodeResult& result, const Checklist& checklist) {
  Inspection out;
  const auto& traj = result.trajectory;
  const auto& diff = result.env_diff;

  const auto verdict = validate_format(traj);
  if (!verdict.valid) {
    std::string codes;
    for (const auto& v : verdict.violations) codes += (codes.empty() ? "" : ",") + std::string(to_string(v.code));
    out.failures.push_back("format: invalid trajectory (" + codes + ")");
  }

  const auto turns = static_cast<int>(count_turns(traj));
  if (checklist.interaction.min_turns && turns < *checklist.interaction.min_turns) {
    out.failures.push_back("turns: " + std::to_string(turns) + " below min_turns " +
                           std::to_string(*checklist.interaction.min_turns));
  }
  if (checklist.interaction.max_turns && turns > *checklist.interaction.max_turns) {
    out.failures.push_back("turns: " + std::to_string(turns) + " above max_turns " +
                           std::to_string(*checklist.interaction.max_turns));
  }

  for (const auto& lib : checklist.interaction.required_libraries) {
    const bool used = std::any_of(traj.blocks.begin(), traj.blocks.end(), [&](const ActionBlock& b) {
      return b.kind == ActionKind::Code && b.body.find(lib) != std::string::npos;
    });
    if (!used) out.failures.push_back("library: " + lib + " not used in any Code block");
  }

  auto contains = [](const std::vector<std::string>& xs, const std::string& x) {
    return std::find(xs.begin(), xs.end(), x) != xs.end();
  };
  for (const auto& f : checklist.environment.must_create) {
    if (!contains(diff.created, f)) out.failures.push_back("must_create: " + f + " was not created");
  }
  for (const auto& f : checklist.environment.must_not_modify) {
    if (contains(diff.modified, f)) out.failures.push_back("must_not_modify: " + f + " was modified");
    if (contains(diff.deleted, f)) out.failures.push_back("must_not_modify: " + f + " was deleted");
  }
  out.accepted = out.failures.empty();
  return out;
}

Json ExportManifest::to_json() const {
  auto stage = [](const StageCounts& c) {
    return Json{{"input", c.input}, {"exported", c.exported}, {"quarantined", c.quarantined}};
  };
  return {{"reasoning", stage(reasoning)},
          {"interaction", stage(interaction)},
          {"total",
           {{"input", reasoning.input + interaction.input},
            {"exported", reasoning.exported + interaction.exported},
            {"quarantined", reasoning.quarantined + interaction.quarantined}}}};
}

namespace {

Json reasoning_record(const ReasoningSample& s) {
  auto opt = [](const std::optional<std::string>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"instruction", s.instruction},    {"reference_answer", s.reference_answer}, {"distilled", opt(s.distilled)},
          {"refined", opt(s.refined)},       {"analyze_part", opt(s.analyze_part)},
          {"understand_part", opt(s.understand_part)}, {"verified", s.verified},
          {"keywords", s.keywords},          {"flags", s.flags}};
}

Json interaction_record(const InteractionRecord& r) {
  Json j = trajectory_to_json(r.episode.trajectory);
  j["text"] = serialize(r.episode.trajectory);
  j["task_type"] = std::string(to_string(r.task.task_type));
  j["checklist"] = checklist_to_json(r.task.checklist);
  j["terminated_by"] = std::string(to_string(r.episode.terminated_by));
  j["env_diff"] = {{"created", r.episode.env_diff.created},
                   {"modified", r.episode.env_diff.modified},
                   {"deleted", r.episode.env_diff.deleted}};
  return j;
}

}  // namespace

ExportManifest export_dataset(std::span<const ReasoningSample> reasoning, std::span<const InteractionRecord> episodes,
                              const ExportFilter& filter, const std::filesystem::path& sink_dir) {
  std::vector<Json> reasoning_rows;
  std::vector<Json> interaction_rows;
  std::vector<Json> quarantine_rows;
  ExportManifest m;

  for (const auto& s : reasoning) {
    ++m.reasoning.input;
    if (s.verified || filter.include_unverified) {
      reasoning_rows.push_back({{"instruction", s.instruction},
                                {"analyze_part", s.analyze_part.value_or("")},
                                {"understand_part", s.understand_part.value_or("")},
                                {"answer", s.reference_answer}});
      ++m.reasoning.exported;
    } else {
      quarantine_rows.push_back({{"stage", "reasoning"}, {"reasons", s.flags}, {"record", reasoning_record(s)}});
      ++m.reasoning.quarantined;
    }
  }
  for (const auto& r : episodes) {
    ++m.interaction.input;
    if (r.error.empty() && r.inspection.accepted) {
      interaction_rows.push_back(interaction_record(r));
      ++m.interaction.exported;
    } else {
      std::vector<std::string> reasons = r.inspection.failures;
      if (!r.error.empty()) reasons.insert(reasons.begin(), r.error);
      Json record = r.error.empty() || !r.task.problem.empty() ? interaction_record(r) : Json(nullptr);
      quarantine_rows.push_back({{"stage", "interaction"}, {"reasons", reasons}, {"record", std::move(record)}});
      ++m.interaction.quarantined;
    }
  }

  try {
    write_jsonl(sink_dir / kReasoningFile, reasoning_rows);
    write_jsonl(sink_dir / kInteractionFile, interaction_rows);
    write_jsonl(sink_dir / kQuarantineFile, quarantine_rows);
    write_text_file(sink_dir / kManifestFile, m.to_json().dump(2) + "\n");
  } catch (const std::exception& e) {
    throw Error(ErrorCode::SinkFailure, e.what());
  }
  return m;
}

std::vector<ReasoningSample> synthesize_reasoning(std::span<const ReasoningInput> inputs,
                                                  const ModelEndpoint& teacher, const KeywordVocabulary& vocab,
                                                  std::uint64_t seed, bool refine, const SynthesisConfig& cfg) {
  if (refine) vocab.validate();
  std::mt19937_64 rng(derive_seed(seed, kKeywordStream));
  std::vector<ReasoningSample> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto sample = distill(in.instruction, in.reference_answer, teacher, cfg);
    if (refine && sample.verified) sample = keyword_refine(std::move(sample), vocab, teacher, rng, cfg);
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<InteractionRecord> synthesize_interaction(const InteractionPlan& plan, const ModelEndpoint& questioner,
                                                      const ModelEndpoint& solver, const SolveOptions& options,
                                                      std::uint64_t seed, const SynthesisConfig& cfg) {
  // Task types are drawn up front so results do not depend on scheduling.
  std::mt19937_64 rng(derive_seed(seed, kTaskTypeStream));
  std::vector<InteractionRecord> records(plan.task_count);
  for (auto& r : records) r.task.task_type = sample_task_type(plan.task_type_weights, rng);

  parallel_for(plan.task_count, plan.workers, [&](std::size_t i) {
    auto& rec = records[i];
    if (cancellation_requested()) {
      rec.error = "interrupted";
      return;
    }
    try {
      rec.task = question(plan.sources, rec.task.task_type, questioner, cfg);
      rec.episode = solve(rec.task, solver, options);
      rec.inspection = inspect(rec.episode, rec.task.checklist);
    } catch (const Error& e) {
      rec.error = e.what();
      rec.inspection.accepted = false;
    }
  });
  return records;
}

}  // namespace analyze_rt::synthesis
