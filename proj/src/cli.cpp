#include "analyze_rt/cli.hpp"

#include <csignal>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "analyze_rt/config.hpp"
#include "analyze_rt/error.hpp"
#include "analyze_rt/eval.hpp"
#include "analyze_rt/grpo.hpp"
#include "analyze_rt/jsonl.hpp"
#include "analyze_rt/pool.hpp"
#include "analyze_rt/reward.hpp"
#include "analyze_rt/synthesis.hpp"

namespace fs = std::filesystem;

namespace analyze_rt {

namespace {

extern "C" void on_interrupt(int) { cancellation_flag().store(true); }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Summary {
  int exit_code = 0;
  std::string text;
  Json json = Json::object();
};

struct GlobalOptions {
  std::string config_path;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

RunConfig load(const GlobalOptions& g) {
  auto cfg = load_config(g.config_path.empty() ? std::nullopt : std::optional<fs::path>(g.config_path));
  if (!g.run_dir.empty()) cfg.run_dir = g.run_dir;
  if (g.seed) cfg.seed = *g.seed;
  std::error_code ec;
  fs::create_directories(cfg.run_dir, ec);
  if (ec) throw Error(ErrorCode::InvalidConfig, "run_dir " + cfg.run_dir.string() + " is not writable: " + ec.message());
  return cfg;
}

// Output files are rewritten by each invocation so reruns are comparable.
void reset_file(const fs::path& p) {
  std::error_code ec;
  fs::remove(p, ec);
}

std::string record_id(const Json& row, std::size_t index) {
  if (row.contains("id") && row.at("id").is_string()) return row.at("id").get<std::string>();
  if (row.contains("metadata") && row.at("metadata").contains("id")) return row.at("metadata").at("id").get<std::string>();
  return "line-" + std::to_string(index + 1);
}

std::optional<std::string> reference_of(const Json& row) {
  for (const char* key : {"reference_answer", "answer"}) {
    if (row.contains(key) && row.at(key).is_string()) return row.at(key).get<std::string>();
  }
  if (row.contains("metadata") && row.at("metadata").contains("reference_answer")) {
    return row.at("metadata").at("reference_answer").get<std::string>();
  }
  return std::nullopt;
}

Json violations_json(const FormatVerdict& v) {
  Json arr = Json::array();
  for (const auto& x : v.violations) arr.push_back({{"code", std::string(to_string(x.code))}, {"position", x.position}});
  return arr;
}

Summary cmd_validate(const RunConfig& cfg, const fs::path& file) {
  const auto rows = read_jsonl(file);
  const auto out_path = cfg.run_dir / "validate.jsonl";
  std::vector<Json> out;
  std::size_t invalid = 0;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto verdict = validate_format(trajectory_from_json(rows[i]));
    if (!verdict.valid) ++invalid;
    violations += verdict.violations.size();
    out.push_back({{"id", record_id(rows[i], i)}, {"valid", verdict.valid}, {"violations", violations_json(verdict)}});
  }
  write_jsonl(out_path, out);
  Summary s;
  s.exit_code = invalid ? 1 : 0;
  s.text = "validate: " + std::to_string(rows.size()) + " trajectories, " + std::to_string(invalid) + " invalid, " +
           std::to_string(violations) + " violations -> " + out_path.string();
  s.json = {{"command", "validate"}, {"trajectories", rows.size()}, {"invalid", invalid}, {"violations", violations},
            {"output", out_path.string()}};
  return s;
}

Summary cmd_reward(const RunConfig& cfg, const fs::path& file, const std::string& mode) {
  const auto rows = read_jsonl(file);
  const auto ledger = cfg.run_dir / "rewards.jsonl";
  reset_file(ledger);
  std::optional<LlmReportJudge> judge;
  if (mode == "research") judge.emplace(cfg.endpoint("report-judge"), cfg.judge_attempts, cfg.retry);
  std::size_t scored = 0;
  std::size_t failed = 0;
  std::size_t gated = 0;
  double sum = 0.0;
  std::string first_error;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto id = record_id(rows[i], i);
    const auto traj = trajectory_from_json(rows[i]);
    try {
      RewardBreakdown r;
      std::optional<std::string> raw;
      if (mode == "qa") {
        const auto ref = reference_of(rows[i]);
        if (!ref) throw Error(ErrorCode::SchemaFailure, id + ": no reference_answer");
        r = qa_reward(traj, *ref, cfg.matcher);
      } else {
        r = research_reward(traj, *judge, cfg.n_t);
        if (r.kind == RewardKind::Research) raw = judge->last_raw();
      }
      if (r.kind == RewardKind::FormatViolation) ++gated;
      append_reward_record(ledger, id, r, raw);
      sum += r.total;
      ++scored;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidConfig) throw;
      ++failed;
      if (first_error.empty()) first_error = e.what();
    }
  }
  Summary s;
  s.exit_code = failed ? 1 : 0;
  const double mean = scored ? sum / static_cast<double>(scored) : 0.0;
  s.text = "reward(" + mode + "): " + std::to_string(scored) + " scored, " + std::to_string(gated) +
           " format-gated, " + std::to_string(failed) + " failed, mean " + num(mean) + " -> " + ledger.string();
  if (!first_error.empty()) s.text += " (first failure: " + first_error + ")";
  s.json = {{"command", "reward"}, {"mode", mode},  {"scored", scored},           {"format_gated", gated},
            {"failed", failed},    {"mean", mean}, {"output", ledger.string()}};
  return s;
}

Summary cmd_grpo(RunConfig cfg, const fs::path& file, std::optional<double> beta, std::optional<double> clip) {
  if (beta) cfg.grpo.kl_beta = *beta;
  if (clip) cfg.grpo.clip_epsilon = *clip;
  cfg.grpo.validate();
  const auto rows = read_jsonl(file);
  const auto out_path = cfg.run_dir / "grpo.jsonl";
  std::vector<Json> out;
  double sum = 0.0;
  std::size_t failed = 0;
  for (const auto& row : rows) {
    const auto group = grpo::group_from_json(row);
    try {
      const auto v = grpo::grpo_objective(group, cfg.grpo);
      out.push_back(grpo::objective_to_json(group, v));
      sum += v.objective;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteInput) throw;
      out.push_back({{"question_id", group.question_id}, {"error", e.what()}});
      ++failed;
    }
  }
  write_jsonl(out_path, out);
  const auto ok = rows.size() - failed;
  const double mean = ok ? sum / static_cast<double>(ok) : 0.0;
  Summary s;
  s.exit_code = failed ? 1 : 0;
  s.text = "grpo: " + std::to_string(rows.size()) + " groups, objective " + num(mean) +
           (rows.size() > 1 ? " (mean)" : "") + ", " + std::to_string(failed) + " failed -> " + out_path.string();
  s.json = {{"command", "grpo"},       {"groups", rows.size()}, {"objective", mean},
            {"failed", failed}, {"output", out_path.string()}};
  return s;
}

struct TaskFile {
  std::string id;
  std::string instruction;
  std::vector<DataSource> sources;
  std::optional<std::string> reference_answer;
};

TaskFile load_task_file(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::SchemaFailure, path.string() + ": " + e.what());
  }
  TaskFile t;
  if (!j.contains("instruction") || !j.at("instruction").is_string()) {
    throw Error(ErrorCode::SchemaFailure, path.string() + ": instruction must be a string");
  }
  t.instruction = j.at("instruction").get<std::string>();
  t.id = j.value("id", path.stem().string());
  if (j.contains("reference_answer")) t.reference_answer = j.at("reference_answer").get<std::string>();
  for (const auto& s : j.value("sources", Json::array())) {
    fs::path p = s.get<std::string>();
    if (p.is_relative()) p = path.parent_path() / p;
    t.sources.push_back(DataSource::from_file(p));
  }
  return t;
}

Summary cmd_run(const RunConfig& cfg, const fs::path& task_path) {
  const auto task = load_task_file(task_path);
  const auto subject = cfg.endpoint("subject");
  auto opts = cfg.workspace_options();
  auto ws = create_workspace(task.sources, cfg.sandbox, opts);
  auto result = run_episode(task.instruction, ws, subject, cfg.episode);
  teardown(ws);

  const auto traj_path = cfg.run_dir / "trajectories.jsonl";
  auto row = trajectory_to_json(result.trajectory);
  row["id"] = task.id;
  row["env_diff"] = {{"created", result.env_diff.created},
                     {"modified", result.env_diff.modified},
                     {"deleted", result.env_diff.deleted}};
  if (task.reference_answer) row["reference_answer"] = *task.reference_answer;
  write_jsonl(traj_path, {row});

  const auto ledger = cfg.run_dir / "rewards.jsonl";
  reset_file(ledger);
  std::optional<RewardBreakdown> reward;
  std::optional<std::string> raw;
  std::string reward_error;
  try {
    if (task.reference_answer) {
      reward = qa_reward(result.trajectory, *task.reference_answer, cfg.matcher);
    } else if (cfg.has_endpoint("report-judge")) {
      LlmReportJudge judge(cfg.endpoint("report-judge"), cfg.judge_attempts, cfg.retry);
      reward = research_reward(result.trajectory, judge, cfg.n_t);
      if (reward->kind == RewardKind::Research) raw = judge.last_raw();
    } else {
      reward = format_gate(result.trajectory);
    }
  } catch (const Error& e) {
    reward_error = e.what();
  }
  if (reward) append_reward_record(ledger, task.id, *reward, raw);

  const bool hard_fail = result.terminated_by == Termination::SessionDead ||
                         result.terminated_by == Termination::ModelError || !reward_error.empty();
  Summary s;
  s.exit_code = hard_fail ? 1 : 0;
  s.text = "run " + task.id + ": terminated_by " + std::string(to_string(result.terminated_by)) + ", " +
           std::to_string(count_turns(result.trajectory)) + " turns, reward " +
           (reward ? num(reward->total) : std::string("n/a")) + " -> " + traj_path.string();
  if (!result.error.empty()) s.text += " (" + result.error + ")";
  if (!reward_error.empty()) s.text += " (reward failed: " + reward_error + ")";
  s.json = {{"command", "run"},
            {"id", task.id},
            {"terminated_by", std::string(to_string(result.terminated_by))},
            {"turns", count_turns(result.trajectory)},
            {"reward", reward ? Json(reward->total) : Json(nullptr)},
            {"output", traj_path.string()}};
  return s;
}

Summary cmd_replay(const RunConfig& cfg, const fs::path& file) {
  const auto rows = read_jsonl(file);
  const auto out_path = cfg.run_dir / "replay.jsonl";
  std::vector<Json> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto prompts = replay_prompts(trajectory_from_json(rows[i]), cfg.episode);
    for (std::size_t c = 0; c < prompts.size(); ++c) {
      Json msgs = Json::array();
      for (const auto& m : prompts[c]) msgs.push_back({{"role", m.role}, {"content", m.content}});
      out.push_back({{"id", record_id(rows[i], i)}, {"call", c}, {"messages", std::move(msgs)}});
    }
  }
  write_jsonl(out_path, out);
  Summary s;
  s.text = "replay: " + std::to_string(rows.size()) + " trajectories, " + std::to_string(out.size()) +
           " model calls -> " + out_path.string();
  s.json = {{"command", "replay"}, {"trajectories", rows.size()}, {"calls", out.size()}, {"output", out_path.string()}};
  return s;
}

synthesis::SynthesisConfig synthesis_config(const RunConfig& cfg) {
  synthesis::SynthesisConfig sc;
  sc.attempts = cfg.synthesis.attempts;
  sc.retry = cfg.retry;
  sc.matcher = cfg.matcher;
  return sc;
}

Json manifest_counts(const synthesis::ExportManifest& m) { return m.to_json(); }

Summary cmd_synth_reasoning(const RunConfig& cfg, const fs::path& input, bool no_refine) {
  std::vector<synthesis::ReasoningInput> inputs;
  for (const auto& row : read_jsonl(input)) {
    const auto ref = reference_of(row);
    if (!row.contains("instruction") || !ref) {
      throw Error(ErrorCode::SchemaFailure, input.string() + ": rows need instruction and reference_answer");
    }
    inputs.push_back({row.at("instruction").get<std::string>(), *ref});
  }
  auto vocab = cfg.synthesis.vocabulary.empty()
                   ? synthesis::KeywordVocabulary::defaults()
                   : synthesis::KeywordVocabulary::from_file(cfg.synthesis.vocabulary, cfg.synthesis.keyword_count);
  vocab.sample_count = cfg.synthesis.keyword_count;
  const bool refine = cfg.synthesis.refine && !no_refine;
  const auto samples =
      synthesis::synthesize_reasoning(inputs, cfg.endpoint("teacher"), vocab, cfg.seed, refine, synthesis_config(cfg));
  const auto sink = cfg.run_dir / "synthesis" / "reasoning";
  fs::create_directories(sink);
  const auto m = synthesis::export_dataset(samples, {}, {}, sink);
  Summary s;
  s.text = "synthesize reasoning: " + std::to_string(m.reasoning.input) + " inputs, " +
           std::to_string(m.reasoning.exported) + " exported, " + std::to_string(m.reasoning.quarantined) +
           " quarantined -> " + sink.string();
  s.json = {{"command", "synthesize reasoning"}, {"manifest", manifest_counts(m)}, {"output", sink.string()}};
  return s;
}

Summary cmd_synth_interaction(const RunConfig& cfg, const std::vector<std::string>& data, std::size_t tasks,
                              std::optional<std::size_t> workers) {
  synthesis::InteractionPlan plan;
  for (const auto& d : data) plan.sources.push_back(DataSource::from_file(d));
  plan.task_count = tasks;
  plan.task_type_weights = cfg.synthesis.task_type_weights;
  plan.workers = workers.value_or(cfg.synthesis.workers);
  synthesis::SolveOptions opts{cfg.episode, cfg.sandbox, cfg.workspace_options()};
  const auto records = synthesis::synthesize_interaction(plan, cfg.endpoint("questioner"), cfg.endpoint("solver"),
                                                         opts, cfg.seed, synthesis_config(cfg));
  const auto sink = cfg.run_dir / "synthesis" / "interaction";
  fs::create_directories(sink);
  const auto m = synthesis::export_dataset({}, records, {}, sink);
  std::size_t errors = 0;
  for (const auto& r : records) errors += r.error.empty() ? 0 : 1;
  Summary s;
  s.exit_code = errors ? 1 : 0;
  s.text = "synthesize interaction: " + std::to_string(m.interaction.input) + " tasks, " +
           std::to_string(m.interaction.exported) + " exported, " + std::to_string(m.interaction.quarantined) +
           " quarantined, " + std::to_string(errors) + " failed -> " + sink.string();
  s.json = {{"command", "synthesize interaction"},
            {"manifest", manifest_counts(m)},
            {"failed", errors},
            {"output", sink.string()}};
  return s;
}

Summary cmd_eval(const RunConfig& cfg, const fs::path& suite) {
  const auto tasks = load_suite(suite);
  EvalConfig ec;
  ec.episode = cfg.episode;
  ec.limits = cfg.sandbox;
  ec.workspace = cfg.workspace_options();
  ec.workers = cfg.eval.workers;
  ec.judge_concurrency = cfg.eval.judge_concurrency;
  ec.judge_attempts = cfg.eval.judge_attempts;
  ec.retry = cfg.retry;
  const auto judge = cfg.has_endpoint("eval-judge") ? cfg.endpoint("eval-judge") : cfg.endpoint("report-judge");
  const auto outcomes = run_suite(tasks, cfg.endpoint("subject"), judge, ec);
  const auto summary = summarize(outcomes);

  const auto dir = cfg.run_dir / "eval";
  fs::create_directories(dir);
  std::vector<Json> rows;
  for (const auto& o : outcomes) rows.push_back(outcome_to_json(o));
  write_jsonl(dir / "results.jsonl", rows);
  write_text_file(dir / "summary.json", summary.to_json().dump(2) + "\n");
  write_text_file(dir / "summary.txt", summary.table());

  Summary s;
  s.exit_code = summary.failed ? 1 : 0;
  s.text = "eval: " + std::to_string(summary.tasks) + " tasks, " + std::to_string(summary.scored) + " scored, " +
           std::to_string(summary.failed) + " failed, content " + num(summary.content_mean) + ", format " +
           num(summary.format_mean) + " -> " + dir.string();
  s.json = summary.to_json();
  s.json["command"] = "eval";
  s.json["output"] = dir.string();
  return s;
}

void write_run_record(const RunConfig& cfg, const std::vector<std::string>& args, const std::string& started,
                      int exit_code) {
  Json j = {{"args", args},
            {"seed", cfg.seed},
            {"started_at", started},
            {"finished_at", utc_now()},
            {"exit_code", exit_code}};
  try {
    write_text_file(cfg.run_dir / "run.json", j.dump(2) + "\n");
  } catch (const std::exception&) {
  }
}

}  // namespace

void install_interrupt_handlers() {
  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Agentic data-science runtime: episodes, rewards, GRPO terms, synthesis and evaluation.",
               "analyze-rt"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "YAML run configuration")->check(CLI::ExistingFile);
  app.add_option("--run-dir", g.run_dir, "Override run_dir from the configuration");
  app.add_option("--seed", g.seed, "Override the root seed");
  app.add_flag("--json", g.json, "Print the summary as one JSON object");

  std::string run_task;
  auto* run = app.add_subcommand("run", "Run one episode on a task file");
  run->add_option("task", run_task, "Task JSON: {id, instruction, sources, reference_answer?}")
      ->required()
      ->check(CLI::ExistingFile);

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Format-check a trajectory JSONL file");
  validate->add_option("file", validate_file, "Trajectory JSONL")->required()->check(CLI::ExistingFile);

  std::string reward_file;
  std::string reward_mode;
  auto* reward = app.add_subcommand("reward", "Score trajectories");
  reward->add_option("file", reward_file, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
  reward->add_option("--mode", reward_mode, "qa or research")->required()->check(CLI::IsMember({"qa", "research"}));

  std::string grpo_file;
  std::optional<double> grpo_beta;
  std::optional<double> grpo_clip;
  auto* grpo_cmd = app.add_subcommand("grpo", "Advantages and objective over rollout groups");
  grpo_cmd->add_option("file", grpo_file, "Rollout-group JSONL")->required()->check(CLI::ExistingFile);
  grpo_cmd->add_option("--beta", grpo_beta, "KL coefficient (overrides grpo.kl_beta)");
  grpo_cmd->add_option("--clip", grpo_clip, "Clip range (overrides grpo.clip_epsilon)");

  auto* synth = app.add_subcommand("synthesize", "Synthesize training trajectories");
  synth->require_subcommand(1);
  std::string reasoning_input;
  bool no_refine = false;
  auto* reasoning = synth->add_subcommand("reasoning", "Distill and refine reasoning traces");
  reasoning->add_option("--input", reasoning_input, "JSONL of {instruction, reference_answer}")
      ->required()
      ->check(CLI::ExistingFile);
  reasoning->add_flag("--no-refine", no_refine, "Skip keyword-guided refinement");
  std::vector<std::string> interaction_data;
  std::size_t interaction_tasks = 1;
  std::optional<std::size_t> interaction_workers;
  auto* interaction = synth->add_subcommand("interaction", "Questioner, solver and inspector over data files");
  interaction->add_option("--data", interaction_data, "Data files to stage")->required()->check(CLI::ExistingFile);
  interaction->add_option("--tasks", interaction_tasks, "Number of tasks")->check(CLI::PositiveNumber);
  interaction->add_option("--workers", interaction_workers, "Concurrent episodes")->check(CLI::PositiveNumber);

  std::string suite_dir;
  auto* eval_cmd = app.add_subcommand("eval", "Run a research evaluation suite");
  eval_cmd->add_option("suite", suite_dir, "Suite directory")->required()->check(CLI::ExistingDirectory);

  std::string replay_file;
  auto* replay = app.add_subcommand("replay", "Rebuild the model prompts of stored trajectories");
  replay->add_option("file", replay_file, "Trajectory JSONL")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  const auto started = utc_now();
  std::optional<RunConfig> cfg;
  Summary s;
  try {
    cfg.emplace(load(g));
    if (run->parsed()) {
      s = cmd_run(*cfg, run_task);
    } else if (validate->parsed()) {
      s = cmd_validate(*cfg, validate_file);
    } else if (reward->parsed()) {
      s = cmd_reward(*cfg, reward_file, reward_mode);
    } else if (grpo_cmd->parsed()) {
      s = cmd_grpo(*cfg, grpo_file, grpo_beta, grpo_clip);
    } else if (reasoning->parsed()) {
      s = cmd_synth_reasoning(*cfg, reasoning_input, no_refine);
    } else if (interaction->parsed()) {
      s = cmd_synth_interaction(*cfg, interaction_data, interaction_tasks, interaction_workers);
    } else if (eval_cmd->parsed()) {
      s = cmd_eval(*cfg, suite_dir);
    } else if (replay->parsed()) {
      s = cmd_replay(*cfg, replay_file);
    }
  } catch (const Error& e) {
    const int code = e.code() == ErrorCode::InvalidConfig ? 2 : 1;
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    if (cfg) write_run_record(*cfg, args, started, code);
    return code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (cfg) write_run_record(*cfg, args, started, 1);
    return 1;
  }
  if (cancellation_requested() && s.exit_code == 0) s.exit_code = 1;
  if (g.json) {
    s.json["exit_code"] = s.exit_code;
    out << s.json.dump() << "\n";
  } else {
    out << s.text << "\n";
  }
  write_run_record(*cfg, args, started, s.exit_code);
  return s.exit_code;
}

}  // namespace analyze_rt
