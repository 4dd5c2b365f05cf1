#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "analyze_rt/cli.hpp"
#include "analyze_rt/jsonl.hpp"
#include "shared/support.hpp"

using namespace analyze_rt;
using test_support::TempDir;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string runner_yaml() {
  std::string s = "[";
  for (const auto& part : test_support::runner_command()) s += "\"" + part + "\", ";
  s.resize(s.size() - 2);
  return s + "]";
}

// Config with a scripted subject and the fixture runner.
std::string write_config(const TempDir& tmp, const std::vector<std::string>& subject_replies) {
  std::vector<Json> script;
  for (const auto& r : subject_replies) script.push_back(r);
  write_jsonl(tmp / "subject.jsonl", script);
  write_text_file(tmp / "run.yaml", "run_dir: out\nendpoints:\n  subject: {script: subject.jsonl}\n"
                                    "sandbox: {runner: " + runner_yaml() + "}\nretry: {initial_backoff_ms: 0}\n");
  return (tmp / "run.yaml").string();
}

Json traj(std::vector<std::pair<std::string, std::string>> blocks, const std::string& id) {
  Json b = Json::array();
  for (const auto& [k, v] : blocks) b.push_back({{"kind", k}, {"body", v}});
  return {{"id", id}, {"instruction", "q"}, {"blocks", b}};
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"--help"}).out.find("synthesize") != std::string::npos);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"validate", "/nonexistent/file.jsonl"}).code == 2);
  CHECK(cli({"reward", "--mode", "both", "/dev/null"}).code == 2);
}

TEST_CASE("invalid config exits 2") {
  TempDir tmp("clibad");
  write_text_file(tmp / "bad.yaml", "grpo: {kl_beta: -1}\n");
  write_jsonl(tmp / "t.jsonl", {traj({{"Answer", "1"}}, "a")});
  const auto r = cli({"-c", (tmp / "bad.yaml").string(), "validate", (tmp / "t.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("InvalidConfig") != std::string::npos);
}

TEST_CASE("validate") {
  TempDir tmp("clival");
  write_jsonl(tmp / "t.jsonl", {traj({{"Analyze", "p"}, {"Answer", "1"}}, "a"), traj({{"Answer", "2"}}, "b"),
                                traj({{"Code", "x=1"}, {"Execute", "ok"}, {"Answer", "3"}}, "c"),
                                traj({{"Analyze", "p"}}, "d")});
  const auto r = cli({"--run-dir", (tmp / "out").string(), "validate", (tmp / "t.jsonl").string()});
  CHECK(r.code == 1);
  CHECK(r.out.rfind("validate: 4 trajectories, 1 invalid", 0) == 0);
  const auto rows = read_jsonl(tmp / "out" / "validate.jsonl");
  REQUIRE(rows.size() == 4);
  CHECK(rows[3].at("id") == "d");
  CHECK_FALSE(rows[3].at("valid").get<bool>());
  CHECK(rows[3].at("violations")[0].at("code") == "NoAnswer");
  CHECK(std::filesystem::exists(tmp / "out" / "run.json"));

  write_jsonl(tmp / "ok.jsonl", {traj({{"Answer", "1"}}, "a")});
  const auto j = cli({"--json", "--run-dir", (tmp / "out").string(), "validate", (tmp / "ok.jsonl").string()});
  CHECK(j.code == 0);
  const auto summary = Json::parse(j.out);
  CHECK(summary.at("invalid") == 0);
  CHECK(summary.at("exit_code") == 0);
}

TEST_CASE("reward in qa mode") {
  TempDir tmp("clirew");
  auto a = traj({{"Answer", "42"}}, "a");
  a["reference_answer"] = "42.0";
  auto b = traj({{"Answer", "41"}}, "b");
  b["reference_answer"] = "42";
  auto c = traj({{"Analyze", "x"}}, "c");
  c["reference_answer"] = "42";
  write_jsonl(tmp / "t.jsonl", {a, b, c});
  const auto r = cli({"--run-dir", (tmp / "out").string(), "reward", "--mode", "qa", (tmp / "t.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("3 scored, 1 format-gated, 0 failed") != std::string::npos);
  const auto rows = read_jsonl(tmp / "out" / "rewards.jsonl");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].at("total").get<double>() == 1.0);
  // Wrong answer, zero turns: (10*0 + 10) / 20.
  CHECK(rows[1].at("total").get<double>() == 0.5);
  CHECK(rows[2].at("total").get<double>() == -1.0);

  write_jsonl(tmp / "noref.jsonl", {traj({{"Answer", "1"}}, "x")});
  CHECK(cli({"--run-dir", (tmp / "out").string(), "reward", "--mode", "qa", (tmp / "noref.jsonl").string()}).code ==
        1);
  // Research mode needs a judge endpoint.
  CHECK(cli({"--run-dir", (tmp / "out").string(), "reward", "--mode", "research", (tmp / "t.jsonl").string()})
            .code == 2);
}

TEST_CASE("grpo objective") {
  TempDir tmp("cligrpo");
  write_jsonl(tmp / "g.jsonl", {Json{{"question_id", "q"},
                                     {"rewards", {0, 1}},
                                     {"logp_policy", {0, 0}},
                                     {"logp_old", {0, 0}},
                                     {"logp_ref", {0, 0}}}});
  const auto r = cli({"--run-dir", (tmp / "out").string(), "grpo", "--beta", "0", (tmp / "g.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("grpo: 1 groups, objective 0,", 0) == 0);
  const auto rows = read_jsonl(tmp / "out" / "grpo.jsonl");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].at("question_id") == "q");

  write_jsonl(tmp / "bad.jsonl", {Json{{"rewards", {0, 1}}}});
  CHECK(cli({"--run-dir", (tmp / "out").string(), "grpo", (tmp / "bad.jsonl").string()}).code == 2);
  CHECK(cli({"--run-dir", (tmp / "out").string(), "grpo", "--clip", "2", (tmp / "g.jsonl").string()}).code == 2);
}

TEST_CASE("run writes the trajectory and reward ledger") {
  TempDir tmp("clirun");
  write_text_file(tmp / "temps.csv", "city,temp\nOslo,4\nLima,19\n");
  write_text_file(tmp / "task.json",
                  R"({"id": "warmest", "instruction": "Which city is warmest?", "sources": ["temps.csv"],
                      "reference_answer": "Lima"})");
  const auto config = write_config(
      tmp, {"<Code>import csv\nrows = list(csv.DictReader(open('temps.csv')))\n"
            "print(max(rows, key=lambda r: int(r['temp']))['city'])</Code>",
            "<Answer>Lima</Answer>"});
  const auto r = cli({"-c", config, "run", (tmp / "task.json").string()});
  INFO(r.out, r.err);
  CHECK(r.code == 0);
  CHECK(r.out.rfind("run warmest: terminated_by Answer, 1 turns, reward 1", 0) == 0);
  const auto trajs = read_jsonl(tmp / "out" / "trajectories.jsonl");
  REQUIRE(trajs.size() == 1);
  CHECK(trajs[0].at("blocks")[1].at("body") == "Lima\n");
  const auto rewards = read_jsonl(tmp / "out" / "rewards.jsonl");
  REQUIRE(rewards.size() == 1);
  CHECK(rewards[0].at("trajectory_id") == "warmest");
  CHECK(rewards[0].at("total").get<double>() == 1.0);

  const auto replay = cli({"-c", config, "replay", (tmp / "out" / "trajectories.jsonl").string()});
  CHECK(replay.code == 0);
  CHECK(replay.out.find("1 trajectories, 2 model calls") != std::string::npos);
  const auto calls = read_jsonl(tmp / "out" / "replay.jsonl");
  REQUIRE(calls.size() == 2);
  CHECK(calls[1].at("messages").back().at("content").get<std::string>().find("Lima\n") != std::string::npos);

  CHECK(cli({"-c", config, "run", (tmp / "missing.json").string()}).code == 2);
}

TEST_CASE("installed binary") {
  TempDir tmp("clibin");
  write_jsonl(tmp / "t.jsonl", {traj({{"Answer", "1"}}, "a")});
  const std::string cmd = std::string("\"") + ANALYZE_RT_CLI + "\" --run-dir \"" + (tmp / "out").string() +
                          "\" validate \"" + (tmp / "t.jsonl").string() + "\" > \"" + (tmp / "stdout").string() +
                          "\"";
  const int status = std::system(cmd.c_str());
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(read_text_file(tmp / "stdout").rfind("validate: 1 trajectories, 0 invalid", 0) == 0);
  const std::string bad = std::string("\"") + ANALYZE_RT_CLI + "\" nope 2>/dev/null";
  CHECK(WEXITSTATUS(std::system(bad.c_str())) == 2);
}
