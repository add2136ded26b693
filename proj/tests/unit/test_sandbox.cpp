// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/error.hpp"
#include "harvest/sandbox.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <algorithm>
#include <future>
#include <set>

using namespace harvest;
using namespace harvest::sandbox;
namespace fs = std::filesystem;

namespace {

BaseImageSpec shell_base() { return BaseImageSpec{"shell", "posix", "local/shell", {{"HARVEST_TEST_VAR", "on"}}}; }

RepoSnapshot tiny() { return RepoSnapshot{"acme/tiny", "c0ffee", 1, {}}; }

struct Fixture {
    testing::TempDir work{"harvest-sandbox"};
    std::shared_ptr<DirectorySnapshotSource> snaps =
        std::make_shared<DirectorySnapshotSource>(testing::fixtures_dir() + "/snapshots");
    LocalRunner runner{LocalOptions{work.path(), NetworkPolicy::Offline}, snaps};
};

CommandRecord sh(const std::string& cmd, double timeout = 10, std::size_t cap = kDefaultOutputCap) {
    ProcessSpec p;
    p.argv = {"/bin/sh", "-c", cmd};
    p.env = inherited_environment();
    p.timeout_seconds = timeout;
    p.output_cap = cap;
    return run_process(p);
}

} // namespace

TEST_CASE("run_process captures output and exit codes") {
    const auto r = sh("echo hi; echo oops >&2; exit 4");
    CHECK(r.stdout_text == "hi\n");
    CHECK(r.stderr_text == "oops\n");
    CHECK(r.exit_code == 4);
    CHECK_FALSE(r.timed_out);
    CHECK(r.duration_seconds >= 0);
    CHECK(sh("kill -9 $$").exit_code == 137);
}

TEST_CASE("run_process timeout kills the process group") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = sh("sleep 100 & sleep 100; echo never", 1);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(r.timed_out);
    CHECK(r.exit_code == -1);
    CHECK(elapsed < 5);
    CHECK(r.stdout_text.find("never") == std::string::npos);
}

TEST_CASE("run_process output cap") {
    const auto r = sh("head -c 300000 /dev/zero | tr '\\0' a", 10, 100000);
    CHECK(r.truncated);
    CHECK(r.stdout_text.size() == 100000);
    CHECK(r.exit_code == 0);
    const auto small = sh("printf abc", 10, 3);
    CHECK_FALSE(small.truncated);
    CHECK(small.stdout_text == "abc");
}

TEST_CASE("run_process stdin and early exit") {
    ProcessSpec p;
    p.argv = {"/bin/sh", "-c", "wc -c"};
    p.env = inherited_environment();
    p.stdin_data = std::string(200000, 'x');
    CHECK(trim_ascii(run_process(p).stdout_text) == "200000");
    p.argv = {"/bin/sh", "-c", "exit 0"};
    CHECK(run_process(p).exit_code == 0);
}

TEST_CASE("local: echo, build trace and cache hit") {
    Fixture f;
    const auto env = f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"true"}, {}});
    CHECK_FALSE(env.cache_hit);
    const auto bt = f.runner.build_trace(env);
    REQUIRE(bt.commands.size() == 1);
    CHECK(bt.commands[0].exit_code == 0);

    const auto t = f.runner.run(env, {"echo hi"}, 10);
    REQUIRE(t.commands.size() == 1);
    CHECK(t.commands[0].stdout_text == "hi\n");
    CHECK(t.commands[0].exit_code == 0);

    const auto again = f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"true"}, {}});
    CHECK(again.cache_hit);
    CHECK(again.id == env.id);
    const auto other = f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"true", "true"}, {}});
    CHECK_FALSE(other.cache_hit);
    CHECK(other.id != env.id);
}

TEST_CASE("local: install failure is a build error") {
    Fixture f;
    try {
        f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"true", "exit 3", "echo unreachable"}, {}});
        FAIL("expected a build error");
    } catch (const BuildError& e) {
        CHECK(e.exit_code() == 3);
        CHECK(e.command() == "exit 3");
        CHECK(e.trace().commands.size() == 2);
        CHECK(e.kind() == ErrorKind::Sandbox);
    }
    CHECK_THROWS_AS(f.runner.build_environment(shell_base(), RepoSnapshot{"acme/none", "x", 1, {}}, {}), Error);
}

TEST_CASE("local: commands are independent and see the install results") {
    Fixture f;
    const auto env =
        f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"echo built > build.txt", "mkdir -p $HOME/cache"}, {}});
    const auto t = f.runner.run(env, {"exit 2", "cat build.txt", "echo $HARVEST_TEST_VAR", "test -d $HOME/cache"}, 10);
    REQUIRE(t.commands.size() == 4);
    CHECK(t.commands[0].exit_code == 2);
    CHECK(t.commands[1].stdout_text == "built\n");
    CHECK(t.commands[2].stdout_text == "on\n");
    CHECK(t.commands[3].exit_code == 0);
}

TEST_CASE("local: timeout marker and reset") {
    Fixture f;
    const auto env = f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"true"}, {}});
    auto v1 = f.runner.reset(env);
    const auto h0 = v1->tree_hash();
    const auto t = v1->run({"echo partial > scratch.txt", "sleep 100"}, 1);
    CHECK(t.commands[1].timed_out);
    CHECK(t.commands[1].exit_code == -1);
    CHECK(t.any_timed_out());
    CHECK(v1->tree_hash() != h0);

    auto v2 = f.runner.reset(env);
    CHECK(v2->tree_hash() == h0);
    const auto r = v2->run({"test -e scratch.txt", "./src/run.sh ok"}, 10);
    CHECK(r.commands[0].exit_code != 0);
    CHECK(r.commands[1].stdout_text == "tiny ok\n");
    auto v3 = f.runner.reset(env);
    CHECK(v3->tree_hash() == v2->tree_hash());
}

TEST_CASE("local: patch in a view does not leak") {
    Fixture f;
    const auto env = f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"true"}, {}});
    auto v = f.runner.reset(env);
    v->apply_patch("--- a/hello.txt\n+++ b/hello.txt\n@@ -1 +1 @@\n-hello\n+patched\n");
    CHECK(v->run({"cat hello.txt"}, 10).commands[0].stdout_text == "patched\n");
    CHECK(f.runner.run(env, {"cat hello.txt"}, 10).commands[0].stdout_text == "hello\n");
}

TEST_CASE("local: concurrent views are isolated") {
    Fixture f;
    const auto env = f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"true"}, {}});
    auto worker = [&](const std::string& tag) {
        auto v = f.runner.reset(env);
        v->run({"echo " + tag + " > mine.txt"}, 10);
        std::string seen;
        for (int i = 0; i < 5; ++i) seen += v->run({"cat mine.txt; ls"}, 10).commands[0].stdout_text;
        return seen;
    };
    auto a = std::async(std::launch::async, worker, "alpha");
    auto b = std::async(std::launch::async, worker, "beta");
    const auto sa = a.get();
    const auto sb = b.get();
    CHECK(sa.find("beta") == std::string::npos);
    CHECK(sb.find("alpha") == std::string::npos);
    CHECK(sa.find("alpha") != std::string::npos);
}

TEST_CASE("local: fixed repo root and offline runs") {
    Fixture f;
    if (!f.runner.namespaces()) {
        MESSAGE("namespace isolation unavailable; skipping");
        return;
    }
    const auto env = f.runner.build_environment(shell_base(), tiny(), InstallConfig{{"pwd > where.txt"}, {}});
    CHECK(env.repo_root == (f.runner.fixed_root() / "repo").string());
    const auto t = f.runner.run(env, {"cat where.txt", "pwd"}, 10);
    CHECK(trim_ascii(t.commands[0].stdout_text) == env.repo_root);
    CHECK(trim_ascii(t.commands[1].stdout_text) == env.repo_root);

    // No route anywhere: a fetch fails fast instead of hanging.
    const auto net = f.runner.run(
        env, {"python3 -c \"import socket; socket.create_connection(('1.1.1.1', 80), timeout=3)\""}, 20);
    CHECK(net.commands[0].exit_code != 0);
    CHECK_FALSE(net.commands[0].timed_out);
}

namespace {

class ScriptedExecutor : public Executor {
public:
    std::vector<std::vector<std::string>> calls;
    std::vector<std::string> inputs;
    std::function<CommandRecord(const std::vector<std::string>&)> respond;

    CommandRecord exec(const std::vector<std::string>& argv, const std::string& stdin_data, double) override {
        calls.push_back(argv);
        inputs.push_back(stdin_data);
        if (respond) return respond(argv);
        return CommandRecord{join(argv, " "), 0, "", "", 0.01, false, false};
    }
};

} // namespace

TEST_CASE("container: build, cache detection, view verbs") {
    testing::TempDir work;
    auto exec = std::make_shared<ScriptedExecutor>();
    auto snaps = std::make_shared<DirectorySnapshotSource>(testing::fixtures_dir() + "/snapshots");
    ContainerRunner runner(ContainerOptions{"docker", work.path()}, snaps, exec);
    const InstallConfig install{{"pip install -e .", "echo 'quoted'"}, {"pytest"}};

    const auto df = runner.dockerfile(shell_base(), install);
    CHECK(df.find("FROM local/shell AS base\n") == 0);
    CHECK(df.find("FROM base AS env\n") != std::string::npos);
    CHECK(df.find("COPY repo/ /workspace/repo/\n") != std::string::npos);
    CHECK(df.find("RUN [\"/bin/sh\",\"-c\",\"pip install -e .\"]\n") != std::string::npos);
    CHECK(df.find("RUN [\"/bin/sh\",\"-c\",\"echo 'quoted'\"]\n") != std::string::npos);

    const auto env = runner.build_environment(shell_base(), tiny(), install);
    CHECK_FALSE(env.cache_hit);
    CHECK(env.backend_ref == "harvest-env:" + env.id);
    CHECK(exec->calls.back()[1] == "build");

    exec->respond = [](const std::vector<std::string>& argv) {
        return CommandRecord{join(argv, " "), 0, "", "#5 CACHED\n#6 CACHED\n#7 CACHED\n", 0.01, false, false};
    };
    CHECK(runner.build_environment(shell_base(), tiny(), install).cache_hit);
    exec->respond = nullptr;

    exec->calls.clear();
    auto view = runner.reset(env);
    view->run({"pytest -q"}, 30);
    std::set<std::string> verbs;
    for (const auto& c : exec->calls) verbs.insert(c[1]);
    CHECK(verbs == std::set<std::string>{"run", "commit", "rm"});
    const auto& run = exec->calls[0];
    CHECK(std::find(run.begin(), run.end(), "none") != run.end());
    CHECK(run.back() == "pytest -q");

    exec->calls.clear();
    view->run({"true"}, 30);
    const auto& next = exec->calls[0];
    // The second command starts from the committed state, not the base image.
    CHECK(std::find(next.begin(), next.end(), env.backend_ref) == next.end());
}

TEST_CASE("container: failing install step") {
    testing::TempDir work;
    auto exec = std::make_shared<ScriptedExecutor>();
    exec->respond = [](const std::vector<std::string>&) {
        return CommandRecord{"docker build", 1, "",
                             "#7 [env 3/3] RUN [\"/bin/sh\",\"-c\",\"exit 3\"]\n"
                             "ERROR: process \"/bin/sh -c exit 3\" did not complete successfully: exit code: 3\n",
                             0.5, false, false};
    };
    ContainerRunner runner(ContainerOptions{"docker", work.path()},
                           std::make_shared<DirectorySnapshotSource>(testing::fixtures_dir() + "/snapshots"), exec);
    try {
        runner.build_environment(shell_base(), tiny(), InstallConfig{{"true", "exit 3"}, {}});
        FAIL("expected a build error");
    } catch (const BuildError& e) {
        CHECK(e.command() == "exit 3");
        CHECK(e.exit_code() == 3);
    }
}

TEST_CASE("install config json is strict") {
    const InstallConfig c{{"a", "b"}, {"t"}};
    CHECK(install_config_from_json(to_json(c)) == c);
    CHECK_THROWS_AS(install_config_from_json(nlohmann::json{{"install", {"a"}}}), Error);
    CHECK_THROWS_AS(install_config_from_json(nlohmann::json{{"install", {"a"}}, {"test_cmd", {}}, {"x", 1}}), Error);
    CHECK_THROWS_AS(install_config_from_json(nlohmann::json{{"install", "a"}, {"test_cmd", nlohmann::json::array()}}),
                    Error);
}
