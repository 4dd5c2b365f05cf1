#include "analyze_rt/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "analyze_rt/error.hpp"
#include "analyze_rt/jsonl.hpp"

namespace fs = std::filesystem;

namespace analyze_rt {

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

namespace {

using Setter = std::function<void(RunConfig&, const YAML::Node&, const fs::path& base)>;

struct Key {
  std::string name;
  bool is_list = false;
  Setter set;
};

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

template <class T>
Key scalar(std::string name, std::function<T&(RunConfig&)> field) {
  return {std::move(name), false, [field](RunConfig& c, const YAML::Node& n, const fs::path&) { field(c) = n.as<T>(); }};
}

Key path_key(std::string name, std::function<fs::path&(RunConfig&)> field) {
  return {std::move(name), false, [field](RunConfig& c, const YAML::Node& n, const fs::path& base) {
            field(c) = resolve(base, n.as<std::string>());
          }};
}

std::map<std::string, std::vector<Key>> section_keys() {
  std::map<std::string, std::vector<Key>> s;
  s["sandbox"] = {
      scalar<double>("timeout_seconds", [](RunConfig& c) -> double& { return c.sandbox.wall_timeout_seconds; }),
      scalar<std::size_t>("output_cap", [](RunConfig& c) -> std::size_t& { return c.sandbox.output_cap; }),
      scalar<std::size_t>("memory_cap_bytes", [](RunConfig& c) -> std::size_t& { return c.sandbox.memory_cap_bytes; }),
      {"runner", false,
       [](RunConfig& c, const YAML::Node& n, const fs::path&) {
         c.runner_command = n.IsSequence() ? n.as<std::vector<std::string>>() : split_ws(n.as<std::string>());
       }},
      scalar<bool>("allow_network", [](RunConfig& c) -> bool& { return c.allow_network; }),
      scalar<bool>("retain", [](RunConfig& c) -> bool& { return c.retain_workspaces; }),
  };
  s["episode"] = {
      scalar<int>("max_actions", [](RunConfig& c) -> int& { return c.episode.max_actions; }),
      scalar<int>("max_turns", [](RunConfig& c) -> int& { return c.episode.max_turns; }),
      scalar<std::size_t>("max_total_chars", [](RunConfig& c) -> std::size_t& { return c.episode.max_total_chars; }),
      {"system_preamble_file", false,
       [](RunConfig& c, const YAML::Node& n, const fs::path& base) {
         c.episode.system_preamble = read_text_file(resolve(base, n.as<std::string>()));
       }},
  };
  s["reward"] = {
      scalar<double>("rel_tol", [](RunConfig& c) -> double& { return c.matcher.rel_tol; }),
      scalar<double>("abs_tol", [](RunConfig& c) -> double& { return c.matcher.abs_tol; }),
      scalar<int>("n_t", [](RunConfig& c) -> int& { return c.n_t; }),
      scalar<int>("judge_attempts", [](RunConfig& c) -> int& { return c.judge_attempts; }),
  };
  s["grpo"] = {
      scalar<double>("clip_epsilon", [](RunConfig& c) -> double& { return c.grpo.clip_epsilon; }),
      scalar<double>("kl_beta", [](RunConfig& c) -> double& { return c.grpo.kl_beta; }),
      scalar<double>("std_epsilon", [](RunConfig& c) -> double& { return c.grpo.std_epsilon; }),
  };
  s["synthesis"] = {
      path_key("vocabulary", [](RunConfig& c) -> fs::path& { return c.synthesis.vocabulary; }),
      scalar<int>("keyword_count", [](RunConfig& c) -> int& { return c.synthesis.keyword_count; }),
      {"task_type_weights", true,
       [](RunConfig& c, const YAML::Node& n, const fs::path&) {
         c.synthesis.task_type_weights = n.as<std::vector<double>>();
       }},
      scalar<std::size_t>("workers", [](RunConfig& c) -> std::size_t& { return c.synthesis.workers; }),
      scalar<int>("attempts", [](RunConfig& c) -> int& { return c.synthesis.attempts; }),
      scalar<bool>("refine", [](RunConfig& c) -> bool& { return c.synthesis.refine; }),
  };
  s["eval"] = {
      scalar<std::size_t>("workers", [](RunConfig& c) -> std::size_t& { return c.eval.workers; }),
      scalar<std::size_t>("judge_concurrency", [](RunConfig& c) -> std::size_t& { return c.eval.judge_concurrency; }),
      scalar<int>("judge_attempts", [](RunConfig& c) -> int& { return c.eval.judge_attempts; }),
  };
  s["retry"] = {
      scalar<int>("max_retries", [](RunConfig& c) -> int& { return c.retry.max_retries; }),
      {"initial_backoff_ms", false,
       [](RunConfig& c, const YAML::Node& n, const fs::path&) {
         c.retry.initial_backoff = std::chrono::milliseconds(n.as<long long>());
       }},
  };
  return s;
}

using EndpointSetter = std::function<void(EndpointConfig&, const YAML::Node&, const fs::path&)>;

const std::vector<std::pair<std::string, std::pair<bool, EndpointSetter>>>& endpoint_keys() {
  static const std::vector<std::pair<std::string, std::pair<bool, EndpointSetter>>> keys = {
      {"alias", {false, [](EndpointConfig& e, const YAML::Node& n, const fs::path&) { e.alias = n.as<std::string>(); }}},
      {"base_url",
       {false, [](EndpointConfig& e, const YAML::Node& n, const fs::path&) { e.base_url = n.as<std::string>(); }}},
      {"model", {false, [](EndpointConfig& e, const YAML::Node& n, const fs::path&) { e.model = n.as<std::string>(); }}},
      {"temperature",
       {false,
        [](EndpointConfig& e, const YAML::Node& n, const fs::path&) { e.sampling.temperature = n.as<double>(); }}},
      {"top_p",
       {false, [](EndpointConfig& e, const YAML::Node& n, const fs::path&) { e.sampling.top_p = n.as<double>(); }}},
      {"max_tokens",
       {false,
        [](EndpointConfig& e, const YAML::Node& n, const fs::path&) { e.sampling.max_tokens_per_call = n.as<int>(); }}},
      {"stop",
       {true,
        [](EndpointConfig& e, const YAML::Node& n, const fs::path&) { e.stop = n.as<std::vector<std::string>>(); }}},
      {"api_key_env",
       {false, [](EndpointConfig& e, const YAML::Node& n, const fs::path&) { e.api_key_env = n.as<std::string>(); }}},
      {"script",
       {false,
        [](EndpointConfig& e, const YAML::Node& n, const fs::path& base) {
          e.script = resolve(base, n.as<std::string>());
        }}},
  };
  return keys;
}

std::string env_name(std::initializer_list<std::string_view> parts) {
  std::string out = "ANALYZE_RT";
  for (auto p : parts) {
    out += '_';
    for (char ch : p) out += ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return out;
}

// Environment values are plain strings; list keys take comma-separated items.
YAML::Node env_node(const std::string& value, bool is_list) {
  if (!is_list) return YAML::Node(value);
  YAML::Node seq(YAML::NodeType::Sequence);
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) seq.push_back(item);
  return seq;
}

template <class F>
void guarded(const std::string& where, F&& f) {
  try {
    f();
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidConfig, where + ": " + e.msg);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, where + ": " + e.what());
  }
}

bool known_role(std::string_view r) {
  return std::find(kEndpointRoles.begin(), kEndpointRoles.end(), r) != kEndpointRoles.end();
}

}  // namespace

RunConfig load_config(const std::optional<fs::path>& path, const EnvLookup& env) {
  RunConfig cfg;
  YAML::Node root;
  fs::path base;
  if (path) {
    try {
      root = YAML::LoadFile(path->string());
    } catch (const YAML::Exception& e) {
      throw Error(ErrorCode::InvalidConfig, path->string() + ": " + e.what());
    }
    base = path->parent_path();
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw Error(ErrorCode::InvalidConfig, path->string() + ": top level must be a mapping");
  }

  const auto sections = section_keys();
  std::set<std::string> known_top = {"run_dir", "seed", "endpoints"};
  for (const auto& [name, _] : sections) known_top.insert(name);

  if (root.IsMap()) {
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      if (!known_top.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown config section '" + key + "'");
    }
    if (root["run_dir"]) {
      guarded("run_dir", [&] { cfg.run_dir = resolve(base, root["run_dir"].as<std::string>()); });
    }
    if (root["seed"]) guarded("seed", [&] { cfg.seed = root["seed"].as<std::uint64_t>(); });
    for (const auto& [section, keys] : sections) {
      const auto node = root[section];
      if (!node) continue;
      if (!node.IsMap()) throw Error(ErrorCode::InvalidConfig, section + " must be a mapping");
      for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return k.name == key; });
        if (it == keys.end()) throw Error(ErrorCode::InvalidConfig, "unknown key " + section + "." + key);
        guarded(section + "." + key, [&] { it->set(cfg, kv.second, base); });
      }
    }
    if (const auto eps = root["endpoints"]) {
      if (!eps.IsMap()) throw Error(ErrorCode::InvalidConfig, "endpoints must be a mapping");
      for (const auto& role_kv : eps) {
        const auto role = role_kv.first.as<std::string>();
        if (!known_role(role)) throw Error(ErrorCode::InvalidConfig, "unknown endpoint role '" + role + "'");
        auto& ep = cfg.endpoints[role];
        if (!role_kv.second.IsMap()) throw Error(ErrorCode::InvalidConfig, "endpoints." + role + " must be a mapping");
        for (const auto& kv : role_kv.second) {
          const auto key = kv.first.as<std::string>();
          const auto& keys = endpoint_keys();
          const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.first == key; });
          if (it == keys.end()) throw Error(ErrorCode::InvalidConfig, "unknown key endpoints." + role + "." + key);
          guarded("endpoints." + role + "." + key, [&] { it->second.second(ep, kv.second, base); });
        }
      }
    }
  }

  // Environment overrides; relative paths from the environment stay relative
  // to the working directory.
  if (const auto v = env(env_name({"run_dir"}))) cfg.run_dir = *v;
  if (const auto v = env(env_name({"seed"}))) guarded("ANALYZE_RT_SEED", [&] { cfg.seed = YAML::Node(*v).as<std::uint64_t>(); });
  for (const auto& [section, keys] : sections) {
    for (const auto& k : keys) {
      const auto name = env_name({section, k.name});
      if (const auto v = env(name)) guarded(name, [&] { k.set(cfg, env_node(*v, k.is_list), {}); });
    }
  }
  for (auto role : kEndpointRoles) {
    for (const auto& [key, entry] : endpoint_keys()) {
      const auto name = env_name({"endpoints", role, key});
      if (const auto v = env(name)) {
        guarded(name, [&, &entry = entry] { entry.second(cfg.endpoints[std::string(role)], env_node(*v, entry.first), {}); });
      }
    }
  }

  cfg.validate();
  cfg.resolve_endpoints(env);
  return cfg;
}

void RunConfig::validate() const {
  guarded("sandbox", [&] { sandbox.validate(); });
  guarded("episode", [&] { episode.validate(); });
  guarded("grpo", [&] { grpo.validate(); });
  if (n_t < 1) throw Error(ErrorCode::InvalidConfig, "reward.n_t must be >= 1");
  if (judge_attempts < 1 || eval.judge_attempts < 1 || synthesis.attempts < 1) {
    throw Error(ErrorCode::InvalidConfig, "attempt counts must be >= 1");
  }
  if (!(matcher.rel_tol >= 0.0) || !(matcher.abs_tol >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "reward tolerances must be >= 0");
  }
  if (synthesis.keyword_count < 1) throw Error(ErrorCode::InvalidConfig, "synthesis.keyword_count must be >= 1");
  if (!synthesis.task_type_weights.empty() && synthesis.task_type_weights.size() != 5) {
    throw Error(ErrorCode::InvalidConfig, "synthesis.task_type_weights needs 5 entries");
  }
  if (synthesis.workers < 1 || eval.workers < 1 || eval.judge_concurrency < 1) {
    throw Error(ErrorCode::InvalidConfig, "worker counts must be >= 1");
  }
  if (retry.max_retries < 0 || retry.initial_backoff.count() < 0) {
    throw Error(ErrorCode::InvalidConfig, "retry settings must be >= 0");
  }
  if (run_dir.empty()) throw Error(ErrorCode::InvalidConfig, "run_dir is empty");
}

void RunConfig::resolve_endpoints(const EnvLookup& env) {
  resolved_.clear();
  std::map<std::string, ModelEndpoint> concrete;
  for (const auto& [role, ep] : endpoints) {
    if (!ep.alias.empty()) continue;
    ModelEndpoint m;
    m.spec.base_url = ep.base_url;
    m.spec.model_name = ep.model.empty() ? role : ep.model;
    m.spec.sampling = ep.sampling;
    m.spec.stop_sequences = ep.stop;
    if (!ep.api_key_env.empty()) m.spec.api_key = env(ep.api_key_env).value_or("");
    if (!ep.script.empty()) {
      try {
        m.client = ScriptedChatClient::from_file(ep.script);
      } catch (const std::exception& e) {
        throw Error(ErrorCode::InvalidConfig, "endpoints." + role + ".script: " + e.what());
      }
    } else if (!ep.base_url.empty()) {
      m.client = std::make_shared<HttpChatClient>(m.spec);
    } else {
      throw Error(ErrorCode::InvalidConfig, "endpoints." + role + " needs base_url, script or alias");
    }
    concrete[role] = std::move(m);
  }
  for (const auto& [role, ep] : endpoints) {
    std::string target = role;
    for (std::size_t hops = 0; !endpoints.at(target).alias.empty(); ++hops) {
      if (hops >= endpoints.size()) throw Error(ErrorCode::InvalidConfig, "alias cycle at endpoints." + role);
      const auto next = endpoints.at(target).alias;
      if (!endpoints.count(next)) {
        throw Error(ErrorCode::InvalidConfig, "endpoints." + target + " aliases unknown role '" + next + "'");
      }
      target = next;
    }
    resolved_[role] = concrete.at(target);
  }
}

bool RunConfig::has_endpoint(const std::string& role) const { return resolved_.count(role) > 0; }

ModelEndpoint RunConfig::endpoint(const std::string& role) const {
  const auto it = resolved_.find(role);
  if (it == resolved_.end()) throw Error(ErrorCode::InvalidConfig, "no endpoint configured for role '" + role + "'");
  return it->second;
}

WorkspaceOptions RunConfig::workspace_options() const {
  WorkspaceOptions o;
  o.run_dir = run_dir / "workspaces";
  o.runner_command = runner_command;
  o.allow_network = allow_network;
  o.retain = retain_workspaces;
  return o;
}

}  // namespace analyze_rt
