#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <thread>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "analyze_rt/error.hpp"
#include "analyze_rt/jsonl.hpp"
#include "analyze_rt/sandbox.hpp"
#include "shared/support.hpp"

using namespace analyze_rt;
using test_support::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> listing(const fs::path& root) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

Workspace make(const TempDir& tmp, std::vector<DataSource> sources = {}, ExecLimits limits = test_support::fast_limits()) {
  return create_workspace(std::move(sources), limits, test_support::workspace_options(tmp));
}

}  // namespace

TEST_CASE("bare filename rule") {
  CHECK(is_bare_filename("a.csv"));
  CHECK(is_bare_filename("my data.csv"));
  CHECK_FALSE(is_bare_filename(""));
  CHECK_FALSE(is_bare_filename("../a.csv"));
  CHECK_FALSE(is_bare_filename("dir/a.csv"));
  CHECK_FALSE(is_bare_filename(".."));
  CHECK_FALSE(is_bare_filename("."));
}

TEST_CASE("staging") {
  TempDir tmp("stage");
  test_support::TempDir src("src");
  {
    std::ofstream(src / "b.csv") << "x,y\n1,2\n";
  }
  SUBCASE("two sources listed exactly") {
    auto ws = make(tmp, {DataSource::from_bytes("a.csv", "k,v\n1,2\n"), DataSource::from_file(src / "b.csv")});
    CHECK(listing(ws.root()) == std::vector<std::string>{"a.csv", "b.csv"});
    CHECK(read_text_file(ws.root() / "b.csv") == "x,y\n1,2\n");
    CHECK(fs::exists(ws.dir() / "_snapshot.json"));
    const auto manifest = Json::parse(read_text_file(ws.dir() / "_snapshot.json"));
    CHECK(manifest.at("a.csv").get<std::string>() == sha256_hex("k,v\n1,2\n"));
  }
  SUBCASE("duplicate names") {
    CHECK_THROWS_AS(make(tmp, {DataSource::from_bytes("a.csv", "1"), DataSource::from_bytes("a.csv", "2")}), Error);
    try {
      make(tmp, {DataSource::from_bytes("a.csv", "1"), DataSource::from_bytes("a.csv", "2")});
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::StagingFailure);
    }
  }
  SUBCASE("traversal and unreadable origin") {
    CHECK_THROWS_AS(make(tmp, {DataSource::from_bytes("../x.csv", "1")}), Error);
    try {
      make(tmp, {DataSource::from_file(src / "missing.csv")});
      FAIL("expected StagingFailure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::StagingFailure);
    }
    // A failed staging leaves nothing behind.
    CHECK(listing(tmp / "workspaces").empty());
  }
  SUBCASE("empty source list") {
    auto ws = make(tmp);
    CHECK(listing(ws.root()).empty());
    CHECK(ws.alive());
    CHECK(snapshot_diff(ws).empty());
  }
}

TEST_CASE("execute basics") {
  TempDir tmp("exec");
  auto ws = make(tmp);
  auto r = execute(ws, "print(1+1)");
  CHECK(r.stdout_text == "2\n");
  CHECK(r.success);
  CHECK(r.stderr_text.empty());

  r = execute(ws, "1/0");
  CHECK_FALSE(r.success);
  CHECK(r.stderr_text.find("ZeroDivisionError") != std::string::npos);

  execute(ws, "x = 41");
  r = execute(ws, "print(x + 1)");
  CHECK(r.success);
  CHECK(r.stdout_text == "42\n");

  // Protocol-looking output from user code is just output.
  r = execute(ws, "print('{\"id\": 999, \"ok\": true}')");
  CHECK(r.stdout_text == "{\"id\": 999, \"ok\": true}\n");
  r = execute(ws, "import sys; sys.exit(3)");
  CHECK_FALSE(r.success);
  r = execute(ws, "print('still here')");
  CHECK(r.stdout_text == "still here\n");
}

TEST_CASE("output is truncated with head and tail") {
  TempDir tmp("trunc");
  ExecLimits limits = test_support::fast_limits();
  limits.output_cap = 256;
  auto ws = make(tmp, {}, limits);
  const auto r = execute(ws, "print('H' * 500 + 'T' * 500)");
  CHECK(r.truncated);
  CHECK(r.stdout_text.substr(0, 192) == std::string(192, 'H'));
  CHECK(r.stdout_text.substr(r.stdout_text.size() - 64) == std::string(63, 'T') + "\n");
  const std::string marker = "\n...[truncated 745 chars]...\n";
  CHECK(r.stdout_text.size() == 256 + marker.size());
  CHECK(r.stdout_text.find(marker) == 192);
}

TEST_CASE("timeout kills and restarts the session") {
  TempDir tmp("timeout");
  auto ws = make(tmp, {}, test_support::fast_limits(1.0));
  execute(ws, "y = 1");
  const auto r = execute(ws, "import time\ntime.sleep(30)");
  CHECK_FALSE(r.success);
  CHECK(r.stderr_text.find("[timeout]") == 0);
  CHECK(ws.alive());
  const auto after = execute(ws, "print('y' in globals())");
  CHECK(after.stdout_text == "False\n");
  CHECK(execute(ws, "print(5)").stdout_text == "5\n");
}

TEST_CASE("snapshot diff") {
  TempDir tmp("diff");
  auto ws = make(tmp, {DataSource::from_bytes("a.csv", "1\n"), DataSource::from_bytes("b.csv", "2\n")});
  CHECK(snapshot_diff(ws).empty());
  execute(ws, "open('out.csv','w').write('z')");
  auto d = snapshot_diff(ws);
  CHECK(d.created == std::vector<std::string>{"out.csv"});
  CHECK(listing(ws.root()) == std::vector<std::string>{"a.csv", "b.csv", "out.csv"});

  execute(ws, "open('a.csv','w').write('changed')");
  execute(ws, "import os; os.remove('b.csv')");
  d = snapshot_diff(ws);
  CHECK(d.modified == std::vector<std::string>{"a.csv"});
  CHECK(d.deleted == std::vector<std::string>{"b.csv"});

  // Rewriting identical bytes is not a modification.
  execute(ws, "open('a.csv','w').write('1\\n')");
  d = snapshot_diff(ws);
  CHECK(d.modified.empty());

  execute(ws, "import os; os.makedirs('sub', exist_ok=True); open('sub/n.txt','w').write('n')");
  d = snapshot_diff(ws);
  CHECK(std::find(d.created.begin(), d.created.end(), "sub/n.txt") != d.created.end());
}

TEST_CASE("diff lists are disjoint and deterministic") {
  TreeSnapshot before = {{"a", "1"}, {"b", "2"}, {"c", "3"}};
  TreeSnapshot after = {{"a", "1"}, {"b", "9"}, {"d", "4"}};
  const auto d = diff_snapshots(before, after);
  CHECK(d.created == std::vector<std::string>{"d"});
  CHECK(d.modified == std::vector<std::string>{"b"});
  CHECK(d.deleted == std::vector<std::string>{"c"});
  CHECK(diff_snapshots(before, after) == d);
}

TEST_CASE("sha256 known vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("teardown semantics") {
  TempDir tmp("teardown");
  SUBCASE("twice is a no-op") {
    auto ws = make(tmp);
    const auto dir = ws.dir();
    teardown(ws);
    CHECK_FALSE(fs::exists(dir));
    teardown(ws);
    CHECK(ws.torn_down());
    CHECK_THROWS_AS(execute(ws, "print(1)"), Error);
  }
  SUBCASE("retention keeps the directory") {
    auto opts = test_support::workspace_options(tmp);
    opts.retain = true;
    auto ws = create_workspace({DataSource::from_bytes("a.csv", "1")}, test_support::fast_limits(), opts);
    const auto dir = ws.dir();
    teardown(ws);
    CHECK(fs::exists(dir / "files" / "a.csv"));
    CHECK(fs::exists(dir / "_snapshot.json"));
  }
  SUBCASE("after a runner crash") {
    auto ws = make(tmp, {DataSource::from_bytes("a.csv", "1")});
    const auto dir = ws.dir();
    try {
      execute(ws, "import os; os._exit(1)");
      FAIL("expected SessionDead");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SessionDead);
    }
    CHECK_FALSE(ws.alive());
    teardown(ws);
    CHECK_FALSE(fs::exists(dir));
  }
  SUBCASE("destructor tears down, moved-from does not") {
    fs::path dir;
    {
      auto ws = make(tmp);
      dir = ws.dir();
      Workspace moved = std::move(ws);
      CHECK(fs::exists(dir));
      CHECK(execute(moved, "print(1)").success);
    }
    CHECK_FALSE(fs::exists(dir));
  }
}

TEST_CASE("spawn failure") {
  TempDir tmp("spawn");
  auto opts = test_support::workspace_options(tmp);
  opts.runner_command = {"/nonexistent/runner"};
  opts.spawn_timeout_seconds = 5;
  try {
    create_workspace({}, test_support::fast_limits(), opts);
    FAIL("expected SessionSpawnFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SessionSpawnFailure);
  }
}

TEST_CASE("workspaces are isolated under concurrency") {
  TempDir tmp("iso");
  auto a = make(tmp, {DataSource::from_bytes("in.csv", "a")});
  auto b = make(tmp, {DataSource::from_bytes("in.csv", "b")});
  CHECK(a.id() != b.id());
  CHECK(a.root() != b.root());
  std::jthread ta([&] {
    for (int i = 0; i < 5; ++i) execute(a, "open('out.csv','w').write('A" + std::to_string(i) + "')");
  });
  std::jthread tb([&] { execute(b, "print('only reads', open('in.csv').read())"); });
  ta.join();
  tb.join();
  CHECK(snapshot_diff(a).created == std::vector<std::string>{"out.csv"});
  CHECK(snapshot_diff(b).empty());
  execute(b, "open('out.csv','w').write('B')");
  CHECK(read_text_file(a.root() / "out.csv") == "A4");
  CHECK(read_text_file(b.root() / "out.csv") == "B");
}

TEST_CASE("network is off by default") {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(listener >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  REQUIRE(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  REQUIRE(::listen(listener, 4) == 0);
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  const auto port = std::to_string(ntohs(addr.sin_port));
  const std::string probe =
      "import socket\ns = socket.socket()\ns.settimeout(2)\nprint(s.connect_ex(('127.0.0.1', " + port + ")))";

  TempDir tmp("net");
  auto isolated = make(tmp);
  const auto r1 = execute(isolated, probe);
  CHECK(r1.success);
  CHECK(r1.stdout_text != "0\n");

  auto opts = test_support::workspace_options(tmp);
  opts.allow_network = true;
  auto open_ws = create_workspace({}, test_support::fast_limits(), opts);
  const auto r2 = execute(open_ws, probe);
  CHECK(r2.stdout_text == "0\n");
  ::close(listener);
}
