#pragma once

#include <string>
#include <vector>

#include "analyze_rt/synthesis.hpp"

namespace test_support {

struct InspectorCase {
  std::string name;
  analyze_rt::EpisodeResult result;
  analyze_rt::synthesis::Checklist checklist;
  bool accepted;
  std::vector<std::string> failures;
};

inline analyze_rt::EpisodeResult episode(const std::vector<std::string>& codes, analyze_rt::EnvDiff diff,
                                         bool with_answer = true) {
  using analyze_rt::ActionKind;
  analyze_rt::EpisodeResult r;
  r.trajectory.append({ActionKind::Analyze, "plan"});
  for (const auto& c : codes) {
    r.trajectory.append({ActionKind::Code, c});
    r.trajectory.append({ActionKind::Execute, "done\n"});
  }
  if (with_answer) r.trajectory.append({ActionKind::Answer, "finished"});
  r.terminated_by = with_answer ? analyze_rt::Termination::Answer : analyze_rt::Termination::MaxActions;
  r.env_diff = std::move(diff);
  return r;
}

inline std::vector<InspectorCase> inspector_cases() {
  using analyze_rt::EnvDiff;
  using analyze_rt::synthesis::Checklist;
  auto checklist = [](std::optional<int> lo, std::optional<int> hi, std::vector<std::string> libs,
                      std::vector<std::string> create, std::vector<std::string> keep) {
    Checklist c;
    c.interaction.min_turns = lo;
    c.interaction.max_turns = hi;
    c.interaction.required_libraries = std::move(libs);
    c.environment.must_create = std::move(create);
    c.environment.must_not_modify = std::move(keep);
    return c;
  };
  const std::string pd = "import pandas as pd\ndf = pd.read_csv('raw.csv')";
  const std::string save = "df.dropna().to_csv('clean.csv', index=False)";
  return {
      {"all_satisfied", episode({pd, save}, EnvDiff{{"clean.csv"}, {}, {}}),
       checklist(2, 6, {"pandas"}, {"clean.csv"}, {"raw.csv"}), true, {}},
      {"missing_output", episode({pd}, EnvDiff{}), checklist({}, {}, {}, {"out.csv"}, {}), false,
       {"must_create: out.csv was not created"}},
      {"too_few_turns_only", episode({save}, EnvDiff{{"clean.csv"}, {}, {}}),
       checklist(2, {}, {}, {"clean.csv"}, {}), false, {"turns: 1 below min_turns 2"}},
      {"too_many_turns", episode({"a=1", "b=2", "c=3"}, EnvDiff{}), checklist({}, 2, {}, {}, {}), false,
       {"turns: 3 above max_turns 2"}},
      {"library_missing", episode({"import csv"}, EnvDiff{}), checklist({}, {}, {"pandas"}, {}, {}), false,
       {"library: pandas not used in any Code block"}},
      {"input_modified", episode({save}, EnvDiff{{}, {"raw.csv"}, {}}), checklist({}, {}, {}, {}, {"raw.csv"}),
       false, {"must_not_modify: raw.csv was modified"}},
      {"input_deleted", episode({"import os; os.remove('raw.csv')"}, EnvDiff{{}, {}, {"raw.csv"}}),
       checklist({}, {}, {}, {}, {"raw.csv"}), false, {"must_not_modify: raw.csv was deleted"}},
      {"no_answer", episode({pd}, EnvDiff{}, false), checklist({}, {}, {}, {}, {}), false,
       {"format: invalid trajectory (NoAnswer)"}},
      {"empty_checklist_zero_turns", episode({}, EnvDiff{}), checklist({}, {}, {}, {}, {}), true, {}},
      {"every_check_in_order", episode({"x=1"}, EnvDiff{{}, {"raw.csv"}, {}}, false),
       checklist(3, {}, {"numpy"}, {"model.json"}, {"raw.csv"}), false,
       {"format: invalid trajectory (NoAnswer)", "turns: 1 below min_turns 3",
        "library: numpy not used in any Code block", "must_create: model.json was not created",
        "must_not_modify: raw.csv was modified"}},
  };
}

}  // namespace test_support
