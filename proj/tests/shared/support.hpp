#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "analyze_rt/endpoint.hpp"
#include "analyze_rt/sandbox.hpp"

namespace test_support {

namespace fs = std::filesystem;

inline std::vector<std::string> runner_command() {
  return {ANALYZE_RT_TEST_PYTHON, "-u", ANALYZE_RT_TEST_RUNNER};
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("analyze_rt_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline analyze_rt::WorkspaceOptions workspace_options(const TempDir& dir) {
  analyze_rt::WorkspaceOptions o;
  o.run_dir = dir.path() / "workspaces";
  o.runner_command = runner_command();
  return o;
}

inline analyze_rt::ExecLimits fast_limits(double timeout_seconds = 20.0) {
  analyze_rt::ExecLimits l;
  l.wall_timeout_seconds = timeout_seconds;
  return l;
}

inline analyze_rt::ModelEndpoint scripted(std::vector<std::string> texts, std::string model = "scripted") {
  analyze_rt::ModelEndpoint m;
  m.spec.model_name = std::move(model);
  m.client = analyze_rt::ScriptedChatClient::from_texts(std::move(texts));
  return m;
}

inline analyze_rt::RetryPolicy no_backoff() {
  analyze_rt::RetryPolicy r;
  r.initial_backoff = std::chrono::milliseconds(0);
  return r;
}

}  // namespace test_support
