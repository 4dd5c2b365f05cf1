#include "analyze_rt/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>

#include "analyze_rt/error.hpp"
#include "analyze_rt/jsonl.hpp"

namespace analyze_rt {

namespace fs = std::filesystem;

DataSource DataSource::from_file(const fs::path& path, std::string name) {
  if (name.empty()) name = path.filename().string();
  return DataSource{std::move(name), path};
}

DataSource DataSource::from_bytes(std::string name, std::string bytes) {
  return DataSource{std::move(name), std::move(bytes)};
}

std::uintmax_t DataSource::size_bytes() const {
  if (const auto* bytes = std::get_if<std::string>(&origin)) return bytes->size();
  std::error_code ec;
  const auto n = fs::file_size(std::get<fs::path>(origin), ec);
  return ec ? 0 : n;
}

bool is_bare_filename(std::string_view name) {
  if (name.empty() || name == "." || name == "..") return false;
  return name.find('/') == std::string_view::npos && name.find('\\') == std::string_view::npos &&
         name.find('\0') == std::string_view::npos;
}

void ExecLimits::validate() const {
  if (!(wall_timeout_seconds > 0)) throw Error(ErrorCode::InvalidConfig, "wall_timeout must be > 0");
  if (output_cap < 256) throw Error(ErrorCode::InvalidConfig, "output_cap must be >= 256");
}

std::vector<std::string> default_runner_command() {
  if (const char* env = std::getenv("ANALYZE_RT_RUNNER"); env && *env) {
    std::vector<std::string> argv;
    std::istringstream in(env);
    for (std::string part; in >> part;) argv.push_back(part);
    return argv;
  }
  return {"python3", "-u", "analyze_runner.py"};
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

TreeSnapshot snapshot_tree(const fs::path& root) {
  TreeSnapshot snap;
  std::error_code ec;
  if (!fs::exists(root, ec)) return snap;
  for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    if (!it->is_regular_file(ec)) continue;
    const auto rel = fs::relative(it->path(), root, ec).generic_string();
    std::ifstream in(it->path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    snap[rel] = sha256_hex(buf.str());
  }
  return snap;
}

EnvDiff diff_snapshots(const TreeSnapshot& before, const TreeSnapshot& after) {
  EnvDiff diff;
  for (const auto& [name, hash] : after) {
    const auto it = before.find(name);
    if (it == before.end()) diff.created.push_back(name);
    else if (it->second != hash) diff.modified.push_back(name);
  }
  for (const auto& [name, hash] : before) {
    if (!after.count(name)) diff.deleted.push_back(name);
  }
  return diff;
}

// Supervised runner child process.
class RunnerSession {
 public:
  RunnerSession(fs::path cwd, std::vector<std::string> argv, const ExecLimits& limits, bool allow_network,
                double spawn_timeout)
      : cwd_(std::move(cwd)), argv_(std::move(argv)), limits_(limits), allow_network_(allow_network),
        spawn_timeout_(spawn_timeout) {
    spawn();
  }
  RunnerSession(const RunnerSession&) = delete;
  RunnerSession& operator=(const RunnerSession&) = delete;
  ~RunnerSession() { stop(); }

  bool alive() const { return pid_ > 0 && !dead_; }

  struct Reply {
    Json frame;
    bool timed_out = false;
  };

  Reply request(const std::string& op, std::string_view code, double timeout_seconds) {
    if (!alive()) throw Error(ErrorCode::SessionDead, "runner session is not running");
    const auto id = next_id_++;
    Json req = {{"id", id}, {"op", op}};
    if (op == "Exec") req["code"] = std::string(code);
    const std::string line = req.dump(-1, ' ', false, Json::error_handler_t::replace) + "\n";
    if (!write_all(line)) {
      dead_ = true;
      throw Error(ErrorCode::SessionDead, "runner closed its input");
    }
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(timeout_seconds));
    while (true) {
      auto frame_line = read_line(deadline);
      if (!frame_line) {
        if (eof_) {
          dead_ = true;
          throw Error(ErrorCode::SessionDead, "runner exited unexpectedly");
        }
        return Reply{{}, true};
      }
      auto frame = Json::parse(*frame_line, nullptr, false);
      if (frame.is_discarded() || !frame.is_object()) {
        dead_ = true;
        throw Error(ErrorCode::SessionDead, "runner sent a malformed frame");
      }
      if (frame.value("id", -2) == id) return Reply{std::move(frame), false};
      // A frame for an abandoned request (e.g. a malformed-request echo): skip.
    }
  }

  void restart() {
    stop();
    dead_ = false;
    eof_ = false;
    buffer_.clear();
    spawn();
  }

  void stop() {
    if (in_fd_ >= 0) {
      ::close(in_fd_);
      in_fd_ = -1;
    }
    if (pid_ > 0) {
      ::kill(-pid_, SIGKILL);
      ::kill(pid_, SIGKILL);
      int status = 0;
      while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
      }
      pid_ = -1;
    }
    if (out_fd_ >= 0) {
      ::close(out_fd_);
      out_fd_ = -1;
    }
  }

 private:
  void spawn() {
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

    if (argv_.empty()) throw Error(ErrorCode::SessionSpawnFailure, "empty runner command");
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw Error(ErrorCode::SessionSpawnFailure, std::strerror(errno));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw Error(ErrorCode::SessionSpawnFailure, std::strerror(errno));
    }
    std::vector<char*> cargv;
    for (auto& a : argv_) cargv.push_back(a.data());
    cargv.push_back(nullptr);
    const std::string cwd = cwd_.string();
    // Built before fork: the child must not allocate.
    const std::string uid_map = std::to_string(::getuid()) + " " + std::to_string(::getuid()) + " 1";
    const std::string gid_map = std::to_string(::getgid()) + " " + std::to_string(::getgid()) + " 1";

    const pid_t pid = ::fork();
    if (pid < 0) throw Error(ErrorCode::SessionSpawnFailure, std::strerror(errno));
    if (pid == 0) {
      ::setpgid(0, 0);
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      const int devnull = ::open("/dev/null", O_WRONLY);
      if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
      if (::chdir(cwd.c_str()) != 0) ::_exit(126);
      if (!allow_network_) isolate_network(uid_map, gid_map);
      if (limits_.memory_cap_bytes > 0) {
        rlimit rl{limits_.memory_cap_bytes, limits_.memory_cap_bytes};
        ::setrlimit(RLIMIT_AS, &rl);
      }
      ::execvp(cargv[0], cargv.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    pid_ = pid;
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];

    Reply ping;
    try {
      ping = request("Ping", {}, spawn_timeout_);
    } catch (const Error& e) {
      stop();
      throw Error(ErrorCode::SessionSpawnFailure, "runner did not start: " + std::string(e.what()));
    }
    if (ping.timed_out || !ping.frame.value("ok", false)) {
      stop();
      throw Error(ErrorCode::SessionSpawnFailure, "runner did not answer Ping");
    }
  }

  // Best effort: a private network namespace, directly when privileged,
  // otherwise inside an unprivileged user namespace (which drops any
  // capability-based file access). Runs in the forked child only.
  static void isolate_network(const std::string& uid_map, const std::string& gid_map) {
    if (::unshare(CLONE_NEWNET) == 0) return;
    if (::unshare(CLONE_NEWUSER | CLONE_NEWNET) != 0) return;
    auto write_file = [](const char* path, std::string_view text) {
      const int fd = ::open(path, O_WRONLY);
      if (fd < 0) return;
      [[maybe_unused]] auto n = ::write(fd, text.data(), text.size());
      ::close(fd);
    };
    write_file("/proc/self/setgroups", "deny");
    write_file("/proc/self/uid_map", uid_map);
    write_file("/proc/self/gid_map", gid_map);
  }

  bool write_all(std::string_view data) {
    while (!data.empty()) {
      const auto n = ::write(in_fd_, data.data(), data.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline) {
    while (true) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
      if (remaining <= 0) return std::nullopt;
      pollfd pfd{out_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1 << 30)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        eof_ = true;
        return std::nullopt;
      }
      if (rc == 0) continue;
      char chunk[65536];
      const auto n = ::read(out_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        eof_ = true;
        return std::nullopt;
      }
      if (n == 0) {
        eof_ = true;
        return std::nullopt;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  fs::path cwd_;
  std::vector<std::string> argv_;
  ExecLimits limits_;
  bool allow_network_;
  double spawn_timeout_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::int64_t next_id_ = 1;
  std::string buffer_;
  bool eof_ = false;
  bool dead_ = false;
};

Workspace::Workspace(Workspace&& other) noexcept
    : id_(std::move(other.id_)),
      dir_(std::move(other.dir_)),
      root_(std::move(other.root_)),
      sources_(std::move(other.sources_)),
      limits_(other.limits_),
      options_(std::move(other.options_)),
      baseline_(std::move(other.baseline_)),
      session_(std::move(other.session_)),
      torn_down_(other.torn_down_) {
  other.torn_down_ = true;
  other.dir_.clear();
  other.root_.clear();
}

Workspace& Workspace::operator=(Workspace&& other) noexcept {
  if (this != &other) {
    teardown(*this);
    id_ = std::move(other.id_);
    dir_ = std::move(other.dir_);
    root_ = std::move(other.root_);
    sources_ = std::move(other.sources_);
    limits_ = other.limits_;
    options_ = std::move(other.options_);
    baseline_ = std::move(other.baseline_);
    session_ = std::move(other.session_);
    torn_down_ = other.torn_down_;
    other.torn_down_ = true;
    other.dir_.clear();
    other.root_.clear();
  }
  return *this;
}

Workspace::~Workspace() {
  if (!dir_.empty()) teardown(*this);
}

std::vector<std::string> Workspace::source_names() const {
  std::vector<std::string> names;
  for (const auto& s : sources_) names.push_back(s.name);
  return names;
}

bool Workspace::alive() const { return !torn_down_ && session_ && session_->alive(); }

namespace {

std::atomic<std::uint64_t> g_workspace_counter{0};

fs::path claim_directory(const fs::path& run_dir, const std::string& prefix, std::string& id_out) {
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw Error(ErrorCode::StagingFailure, "cannot create run dir " + run_dir.string() + ": " + ec.message());
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::ostringstream id;
    id << prefix << '-' << std::setw(4) << std::setfill('0') << ++g_workspace_counter;
    const auto dir = run_dir / id.str();
    if (fs::create_directory(dir, ec)) {
      id_out = id.str();
      return dir;
    }
    if (ec) throw Error(ErrorCode::StagingFailure, "cannot create " + dir.string() + ": " + ec.message());
  }
  throw Error(ErrorCode::StagingFailure, "no free workspace id under " + run_dir.string());
}

}  // namespace

Workspace create_workspace(std::vector<DataSource> sources, const ExecLimits& limits,
                           const WorkspaceOptions& options) {
  limits.validate();
  std::set<std::string> names;
  for (const auto& s : sources) {
    if (!is_bare_filename(s.name)) throw Error(ErrorCode::StagingFailure, "not a bare filename: " + s.name);
    if (!names.insert(s.name).second) throw Error(ErrorCode::StagingFailure, "duplicate source name: " + s.name);
  }

  Workspace ws;
  ws.dir_ = claim_directory(options.run_dir, options.id_prefix, ws.id_);
  ws.root_ = ws.dir_ / "files";
  ws.limits_ = limits;
  ws.options_ = options;
  if (ws.options_.runner_command.empty()) ws.options_.runner_command = default_runner_command();

  try {
    fs::create_directory(ws.root_);
    for (const auto& s : sources) {
      const auto target = ws.root_ / s.name;
      if (const auto* path = std::get_if<fs::path>(&s.origin)) {
        std::error_code ec;
        if (!fs::is_regular_file(*path, ec)) throw Error(ErrorCode::StagingFailure, "unreadable origin " + path->string());
        fs::copy_file(*path, target, fs::copy_options::overwrite_existing, ec);
        if (ec) throw Error(ErrorCode::StagingFailure, "copy " + path->string() + ": " + ec.message());
      } else {
        std::ofstream out(target, std::ios::binary);
        const auto& bytes = std::get<std::string>(s.origin);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::StagingFailure, "cannot write " + target.string());
      }
    }
    ws.sources_ = std::move(sources);
    ws.baseline_ = snapshot_tree(ws.root_);
    write_text_file(ws.dir_ / kSnapshotManifest, Json(ws.baseline_).dump(2) + "\n");
    ws.session_ = std::make_unique<RunnerSession>(ws.root_, ws.options_.runner_command, limits,
                                                  options.allow_network, options.spawn_timeout_seconds);
  } catch (...) {
    // Staging failed: nothing of this workspace should survive.
    ws.options_.retain = false;
    teardown(ws);
    throw;
  }
  return ws;
}

ExecutionResult execute(Workspace& ws, std::string_view code) {
  if (ws.torn_down_ || !ws.session_) throw Error(ErrorCode::SessionDead, "workspace " + ws.id_ + " is torn down");
  const auto start = std::chrono::steady_clock::now();
  const auto reply = ws.session_->request("Exec", code, ws.limits_.wall_timeout_seconds);
  ExecutionResult result;
  result.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (reply.timed_out) {
    try {
      ws.session_->restart();
    } catch (const Error& e) {
      throw Error(ErrorCode::SessionDead, "restart after timeout failed: " + std::string(e.what()));
    }
    std::ostringstream note;
    note << "[timeout] execution exceeded " << ws.limits_.wall_timeout_seconds
         << " s; session restarted and prior state was lost\n";
    result.stderr_text = note.str();
    result.success = false;
    return result;
  }

  bool t1 = false;
  bool t2 = false;
  result.stdout_text = truncate_head_tail(reply.frame.value("stdout", std::string()), ws.limits_.output_cap, &t1);
  result.stderr_text = truncate_head_tail(reply.frame.value("stderr", std::string()), ws.limits_.output_cap, &t2);
  result.truncated = t1 || t2;
  result.success = reply.frame.value("ok", false);
  return result;
}

EnvDiff snapshot_diff(const Workspace& ws) { return diff_snapshots(ws.baseline_, snapshot_tree(ws.root_)); }

void teardown(Workspace& ws) {
  if (ws.torn_down_) return;
  ws.torn_down_ = true;
  if (ws.session_) {
    ws.session_->stop();
    ws.session_.reset();
  }
  if (!ws.options_.retain && !ws.dir_.empty()) {
    std::error_code ec;
    fs::remove_all(ws.dir_, ec);
  }
}

}  // namespace analyze_rt
