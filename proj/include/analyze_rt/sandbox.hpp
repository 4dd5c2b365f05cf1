#pragma once

// Per-episode workspaces: staged data sources, a supervised runner session
// speaking line-delimited JSON over stdio, and content-hash snapshots.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "analyze_rt/execution.hpp"

namespace analyze_rt {

struct DataSource {
  std::string name;  // bare filename as it appears in the instruction
  std::variant<std::filesystem::path, std::string> origin;  // file path or byte payload

  static DataSource from_file(const std::filesystem::path& path, std::string name = {});
  static DataSource from_bytes(std::string name, std::string bytes);
  std::uintmax_t size_bytes() const;
};

/// True for a non-empty name with no directory component.
bool is_bare_filename(std::string_view name);

struct ExecLimits {
  double wall_timeout_seconds = 120.0;
  std::size_t output_cap = 4096;
  std::size_t memory_cap_bytes = 0;  // 0 = unlimited; advisory otherwise

  void validate() const;  // throws Error(InvalidConfig)
};

struct WorkspaceOptions {
  std::filesystem::path run_dir = std::filesystem::temp_directory_path() / "analyze_rt";
  std::vector<std::string> runner_command;  // argv; empty = default_runner_command()
  std::string id_prefix = "ws";
  bool allow_network = false;
  bool retain = false;
  double spawn_timeout_seconds = 30.0;
};

/// $ANALYZE_RT_RUNNER split on whitespace, else {"python3", "-u", "analyze_runner.py"}.
std::vector<std::string> default_runner_command();

struct EnvDiff {
  std::vector<std::string> created;
  std::vector<std::string> modified;
  std::vector<std::string> deleted;

  bool empty() const { return created.empty() && modified.empty() && deleted.empty(); }
  bool operator==(const EnvDiff&) const = default;
};

/// Relative path -> SHA-256 hex of contents, for every regular file under
/// root.
using TreeSnapshot = std::map<std::string, std::string>;

inline constexpr std::string_view kSnapshotManifest = "_snapshot.json";

TreeSnapshot snapshot_tree(const std::filesystem::path& root);
EnvDiff diff_snapshots(const TreeSnapshot& before, const TreeSnapshot& after);
std::string sha256_hex(std::string_view data);

class RunnerSession;

/// An isolated directory plus a live interpreter session. Move-only; the
/// destructor tears down.
class Workspace {
 public:
  Workspace(Workspace&&) noexcept;
  Workspace& operator=(Workspace&&) noexcept;
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
  ~Workspace();

  const std::string& id() const { return id_; }
  const std::filesystem::path& dir() const { return dir_; }
  const std::filesystem::path& root() const { return root_; }
  const std::vector<DataSource>& sources() const { return sources_; }
  std::vector<std::string> source_names() const;
  const ExecLimits& limits() const { return limits_; }
  bool alive() const;
  bool torn_down() const { return torn_down_; }
  void set_retain(bool retain) { options_.retain = retain; }

 private:
  friend Workspace create_workspace(std::vector<DataSource>, const ExecLimits&, const WorkspaceOptions&);
  friend ExecutionResult execute(Workspace&, std::string_view);
  friend EnvDiff snapshot_diff(const Workspace&);
  friend void teardown(Workspace&);
  Workspace() = default;

  std::string id_;
  std::filesystem::path dir_;   // <run_dir>/<id>: manifest plus root
  std::filesystem::path root_;  // <dir>/files: the session's working directory
  std::vector<DataSource> sources_;
  ExecLimits limits_;
  WorkspaceOptions options_;
  TreeSnapshot baseline_;
  std::unique_ptr<RunnerSession> session_;
  bool torn_down_ = false;
};

/// Claims <run_dir>/<id>/, stages sources into its files/ subdirectory,
/// writes <run_dir>/<id>/_snapshot.json, and starts the runner in files/.
/// Throws Error(StagingFailure) or Error(SessionSpawnFailure).
Workspace create_workspace(std::vector<DataSource> sources, const ExecLimits& limits,
                           const WorkspaceOptions& options = {});

/// Runs code in the persistent session. On timeout the session is killed and
/// restarted and the result reports failure. Throws Error(SessionDead) when
/// the runner crashes or cannot be restarted.
ExecutionResult execute(Workspace& workspace, std::string_view code);

EnvDiff snapshot_diff(const Workspace& workspace);

/// Stops the session and removes the directory unless retained. Idempotent.
void teardown(Workspace& workspace);

}  // namespace analyze_rt
