// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/error.hpp"
#include "harvest/setup.hpp"
#include "harvest/util.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace harvest;
using namespace harvest::setup;
namespace fs = std::filesystem;

namespace {

corpus::CandidateInstance cand(int pr, const std::string& commit, const char* merged) {
    corpus::CandidateInstance c;
    c.repo = "acme/x";
    c.pr = pr;
    c.base_commit = commit;
    if (merged) c.merge_time = parse_rfc3339(merged);
    return c;
}

std::shared_ptr<sandbox::DirectorySnapshotSource> e2e_snapshots() {
    return std::make_shared<sandbox::DirectorySnapshotSource>(testing::fixtures_dir() + "/e2e/snapshots");
}

RepoSnapshot mathlib_m2() { return RepoSnapshot{"acme/mathlib", "m2", 5, parse_rfc3339("2024-03-01T10:00:00Z")}; }

// Canned sandbox for ecosystems without a local toolchain.
class FakeSandbox : public sandbox::Sandbox {
public:
    std::map<std::string, CommandRecord> replies;  // command -> record
    std::vector<std::string> ran;
    int builds = 0;

    EnvironmentHandle build_environment(const BaseImageSpec& base, const RepoSnapshot&,
                                        const InstallConfig& install) override {
        ++builds;
        ExecutionTrace t;
        for (const auto& c : install.install) {
            auto r = reply(c);
            t.commands.push_back(r);
            if (r.exit_code != 0) throw sandbox::BuildError("install failed", c, r.exit_code, t);
        }
        EnvironmentHandle h;
        h.id = "fake-" + std::to_string(builds);
        h.base = base;
        return h;
    }

    std::unique_ptr<sandbox::View> reset(const EnvironmentHandle&) override {
        return std::make_unique<FakeView>(*this);
    }

    ExecutionTrace build_trace(const EnvironmentHandle&) override { return {}; }

    CommandRecord reply(const std::string& cmd) {
        ran.push_back(cmd);
        auto it = replies.find(cmd);
        CommandRecord r = it == replies.end() ? CommandRecord{cmd, 0, "", "", 0.0, false, false} : it->second;
        r.command = cmd;
        return r;
    }

private:
    class FakeView : public sandbox::View {
    public:
        explicit FakeView(FakeSandbox& owner) : owner_(owner) {}
        ExecutionTrace run(const std::vector<std::string>& commands, double) override {
            ExecutionTrace t;
            for (const auto& c : commands) t.commands.push_back(owner_.reply(c));
            return t;
        }
        std::vector<std::string> apply_patch(const std::string&) override { return {}; }
        std::string tree_hash() override { return "fake"; }

    private:
        FakeSandbox& owner_;
    };
};

const std::string kListCmd = "find . -path ./.git -prune -o -type f -print | LC_ALL=C sort";

class ScriptedSynth : public Synthesizer {
public:
    std::function<SetupAction(const SetupRequest&)> fn;
    std::vector<SetupRequest> seen;
    SetupAction next(const SetupRequest& r) override {
        seen.push_back(r);
        return fn(r);
    }
};

SetupAction final_action(InstallConfig c) {
    SetupAction a;
    a.kind = SetupAction::Kind::Final;
    a.config = std::move(c);
    return a;
}

SetupAction run_action(std::string cmd) {
    SetupAction a;
    a.kind = SetupAction::Kind::Run;
    a.command = std::move(cmd);
    return a;
}

double binom(int n, int k) {
    if (k < 0 || k > n) return 0;
    double r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

} // namespace

TEST_CASE("select_snapshot") {
    CHECK(select_snapshot({cand(3, "a", "2024-01-01T00:00:00Z")}).commit == "a");
    const auto s = select_snapshot({cand(3, "a", "2024-01-01T00:00:00Z"), cand(4, "b", "2024-02-01T00:00:00Z")});
    CHECK(s.commit == "b");
    CHECK(s.selected_from == 4);
    CHECK(select_snapshot({cand(9, "nine", "2024-01-01T00:00:00Z"), cand(5, "five", "2024-01-01T00:00:00Z")}).commit ==
          "nine");
    CHECK(select_snapshot({cand(5, "five", "2024-01-01T00:00:00Z"), cand(9, "nine", "2024-01-01T00:00:00Z")}).commit ==
          "nine");
    CHECK_THROWS_AS(select_snapshot({}), Error);
    CHECK_THROWS_AS(select_snapshot({cand(1, "a", nullptr)}), Error);
    auto other = cand(2, "b", "2024-01-01T00:00:00Z");
    other.repo = "acme/y";
    CHECK_THROWS_AS(select_snapshot({cand(1, "a", "2024-01-01T00:00:00Z"), other}), Error);
}

TEST_CASE("base image registry") {
    const auto& reg = default_registry();
    CHECK(reg.base_image_for("java", std::string("11")).toolchain_version == "11");
    CHECK(reg.base_image_for("java", std::string("11")).image_ref == "eclipse-temurin:11-jdk");
    CHECK(reg.base_image_for("Java").toolchain_version == "17");
    CHECK(reg.base_image_for("java", std::string("8")).toolchain_version == "17");
    CHECK(reg.base_image_for("go", std::string("1.21.5")).toolchain_version == "1.21");
    CHECK(reg.base_image_for("C++").language == "cpp");
    try {
        reg.base_image_for("brainfck");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidArgument);
        CHECK(std::string(e.what()).find("java") != std::string::npos);
        CHECK(std::string(e.what()).find("python") != std::string::npos);
    }
}

TEST_CASE("toolchain hints from manifests") {
    testing::TempDir d;
    write_file(d / "pom.xml", "<project><properties><maven.compiler.release>21</maven.compiler.release></properties></project>");
    CHECK(detect_toolchain_hint("java", d.path()) == std::optional<std::string>("21"));
    write_file(d / "pom.xml", "<project><properties><maven.compiler.source>1.8</maven.compiler.source></properties></project>");
    CHECK(detect_toolchain_hint("java", d.path()) == std::optional<std::string>("8"));
    write_file(d / "go.mod", "module x\n\ngo 1.21.4\n");
    CHECK(detect_toolchain_hint("go", d.path()) == std::optional<std::string>("1.21.4"));
    write_file(d / "package.json", R"({"engines": {"node": ">=18.0"}})");
    CHECK(detect_toolchain_hint("javascript", d.path()) == std::optional<std::string>("18.0"));
    CHECK_FALSE(detect_toolchain_hint("python", d.path()));
    write_file(d / ".tool-versions", "python 3.10.4\n");
    CHECK(detect_toolchain_hint("python", d.path()) == std::optional<std::string>("3.10.4"));
}

TEST_CASE("heuristic rules") {
    const auto go = HeuristicSynthesizer::propose({"go.mod", "pkg/a.go", "pkg/a_test.go"});
    REQUIRE(go);
    CHECK(go->install == std::vector<std::string>{"go mod download"});
    CHECK(go->test_cmd == std::vector<std::string>{"go test ./... -v"});

    const auto py = HeuristicSynthesizer::propose({"./pyproject.toml", "./pkg/__init__.py"});
    REQUIRE(py);
    CHECK(py->test_cmd.front().find("-p no:cacheprovider") != std::string::npos);
    CHECK(py->install.back().find("-e .") != std::string::npos);

    const auto rust = HeuristicSynthesizer::propose({"Cargo.toml", "src/lib.rs"});
    REQUIRE(rust);
    CHECK(rust->install.front().rfind("cargo fetch", 0) == 0);
    CHECK(rust->test_cmd.front().find("--verbose") != std::string::npos);

    const auto gradle = HeuristicSynthesizer::propose({"build.gradle", "gradlew"});
    REQUIRE(gradle);
    CHECK(gradle->test_cmd.front().rfind("./gradlew", 0) == 0);
    CHECK(gradle->test_cmd.back().find(".xml") != std::string::npos);

    const auto mono = HeuristicSynthesizer::propose({"README.md", "docs/index.md", "service/go.mod", "web/deep/package.json"});
    REQUIRE(mono);
    CHECK(mono->test_cmd == std::vector<std::string>{"cd service && go test ./... -v"});

    CHECK_FALSE(HeuristicSynthesizer::propose({"README.md", "notes.txt"}));
}

TEST_CASE("rebuild rule for compiled languages") {
    CHECK(is_compiled_language("Go"));
    CHECK(is_compiled_language("C++"));
    CHECK_FALSE(is_compiled_language("python"));
    CHECK(is_rebuild_command("go test ./... -v"));
    CHECK(is_rebuild_command("cargo test --offline"));
    CHECK(is_rebuild_command("./mvnw -B test -Dx=y"));
    CHECK(is_rebuild_command("cd service && make -j4"));
    CHECK_FALSE(is_rebuild_command("cat target/surefire-reports/*.xml"));
    CHECK_FALSE(is_rebuild_command("pytest -v"));
}

TEST_CASE("heuristic synthesizer on a Go layout succeeds on attempt 1") {
    FakeSandbox sb;
    sb.replies[kListCmd] = CommandRecord{"", 0, "./go.mod\n./calc/calc.go\n./calc/calc_test.go\n", "", 0.0, false, false};
    sb.replies["go test ./... -v"] =
        CommandRecord{"", 0, "=== RUN   TestAdd\n--- PASS: TestAdd (0.00s)\n=== RUN   TestSub\n--- FAIL: TestSub (0.00s)\n",
                      "", 0.0, false, false};
    HeuristicSynthesizer h;
    const auto base = default_registry().base_image_for("go");
    const auto res = synthesize_setup(RepoSnapshot{"acme/calc", "c1", 1, {}}, base, h, sb);
    REQUIRE(res.size() == 1);
    CHECK(res[0].attempt_index == 1);
    CHECK(res[0].succeeded);
    REQUIRE(res[0].config);
    CHECK(res[0].config->test_cmd == std::vector<std::string>{"go test ./... -v"});
    CHECK(res[0].verification->statuses.size() == 2);
}

TEST_CASE("budget and stop at first success") {
    FakeSandbox sb;
    sb.replies["run-tests"] = CommandRecord{"", 0, "ok 1 - a\n", "", 0.0, false, false};
    const auto base = default_registry().base_image_for("shell");
    const InstallConfig good{{"true"}, {"run-tests"}};

    ScriptedSynth broken;
    broken.fn = [](const SetupRequest&) -> SetupAction { throw Error(ErrorKind::Seam, "endpoint down"); };
    SynthesisOptions three;
    three.budget = 3;
    three.verify.parser = logparse::builtin_parser("tap");
    const auto r3 = synthesize_setup(RepoSnapshot{"acme/x", "c", 1, {}}, base, broken, sb, three);
    REQUIRE(r3.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(r3[static_cast<std::size_t>(i)].attempt_index == i + 1);
        CHECK_FALSE(r3[static_cast<std::size_t>(i)].succeeded);
        CHECK(r3[static_cast<std::size_t>(i)].failure == failure::kSeam);
        CHECK_FALSE(r3[static_cast<std::size_t>(i)].config);
    }

    ScriptedSynth flaky;
    flaky.fn = [&](const SetupRequest& r) {
        if (r.attempt == 1) return final_action(InstallConfig{{"true"}, {"echo no tests here"}});
        return final_action(good);
    };
    const auto r2 = synthesize_setup(RepoSnapshot{"acme/x", "c", 1, {}}, base, flaky, sb, three);
    REQUIRE(r2.size() == 2);
    CHECK_FALSE(r2[0].succeeded);
    CHECK(r2[0].failure == failure::kNoParsedTests);
    CHECK(r2[1].succeeded);
    CHECK(r2[1].config == good);

    ScriptedSynth endless;
    endless.fn = [](const SetupRequest&) { return run_action("true"); };
    SynthesisOptions few;
    few.max_steps = 4;
    const auto rl = synthesize_setup(RepoSnapshot{"acme/x", "c", 1, {}}, base, endless, sb, few);
    REQUIRE(rl.size() == 1);
    CHECK(rl[0].failure == failure::kStepLimit);
    CHECK(rl[0].transcript.commands.size() == 4);
}

TEST_CASE("verify_setup failure categories") {
    FakeSandbox sb;
    sb.replies["exit 1"] = CommandRecord{"", 1, "", "", 0.0, false, false};
    sb.replies["nosuchrunner"] = CommandRecord{"", 127, "", "sh: nosuchrunner: not found\n", 0.0, false, false};
    sb.replies["slow"] = CommandRecord{"", -1, "", "", 9.0, true, false};
    const auto shell = default_registry().base_image_for("shell");
    const RepoSnapshot snap{"acme/x", "c", 1, {}};
    CHECK(verify_setup({{"exit 1"}, {"t"}}, snap, shell, sb).failure == failure::kInstall);
    CHECK(verify_setup({{"true"}, {"nosuchrunner"}}, snap, shell, sb).failure == failure::kMissingRunner);
    CHECK(verify_setup({{"true"}, {"slow"}}, snap, shell, sb).failure == failure::kTimeout);
    CHECK(verify_setup({{}, {"t"}}, snap, shell, sb).failure == failure::kMalformed);
    CHECK(verify_setup({{"true"}, {"echo"}}, snap, shell, sb).failure == failure::kNoParsedTests);
    const auto go = default_registry().base_image_for("go");
    CHECK(verify_setup({{"true"}, {"cat report.txt", "go test ./..."}}, snap, go, sb).failure == failure::kNoRebuild);
}

TEST_CASE("completion protocol parsing") {
    const auto heredoc = CompletionSynthesizer::parse_response(
        "Writing the config.\n```bash\ncat > install_config.json <<'JSON'\n{\n  \"install\": [\"pip install -e .\"],\n"
        "  \"test_cmd\": [\"pytest -v\"]\n}\nJSON\ncat install_config.json\n```\n");
    CHECK(heredoc.kind == SetupAction::Kind::Final);
    CHECK(heredoc.config == InstallConfig{{"pip install -e ."}, {"pytest -v"}});

    const auto fenced = CompletionSynthesizer::parse_response(
        "Done.\n```json\n{\"install\": [\"npm ci\"], \"test_cmd\": [\"npm test\"]}\n```\n");
    CHECK(fenced.kind == SetupAction::Kind::Final);
    CHECK(fenced.config.test_cmd == std::vector<std::string>{"npm test"});

    const auto cmd = CompletionSynthesizer::parse_response("Look around first.\n```bash\nls -la\n```\n");
    CHECK(cmd.kind == SetupAction::Kind::Run);
    CHECK(cmd.command == "ls -la");

    CHECK(CompletionSynthesizer::parse_response("I cannot build this project.").kind == SetupAction::Kind::GiveUp);
    CHECK_THROWS_AS(CompletionSynthesizer::parse_response("```json\n{\"install\": [\"x\"]}\n```\n"), Error);
    CHECK_THROWS_AS(CompletionSynthesizer::parse_response("```json\n{\"install\": [], \"test_cmd\": [], \"extra\": 1}\n```"),
                    Error);
}

TEST_CASE("clip_output keeps the tail") {
    std::string text;
    for (int i = 0; i < 100; ++i) text += std::to_string(i) + std::string(600, 'x') + "\n";
    const auto clipped = clip_output(text);
    const auto lines = split_lines(clipped);
    REQUIRE(lines.size() == 64);
    CHECK(lines.front().rfind("36", 0) == 0);
    for (const auto& l : lines) CHECK(l.size() <= 500);
    CHECK(clip_output("a\nb\n") == "a\nb\n");
}

TEST_CASE("setup_pass_at_k") {
    CHECK(setup_pass_at_k({{true}}, 1) == 1.0);
    std::vector<bool> none(10, false);
    for (int k = 1; k <= 10; ++k) CHECK(setup_pass_at_k({none}, k) == 0.0);

    std::vector<bool> four(10, false);
    for (int i = 0; i < 4; ++i) four[static_cast<std::size_t>(i)] = true;
    // Enumerate all 5-subsets of 10 attempts and count those with a success.
    int hit = 0, total = 0;
    for (int mask = 0; mask < (1 << 10); ++mask) {
        if (__builtin_popcount(static_cast<unsigned>(mask)) != 5) continue;
        ++total;
        bool any = false;
        for (int i = 0; i < 10; ++i) any = any || ((mask >> i) & 1 && four[static_cast<std::size_t>(i)]);
        hit += any ? 1 : 0;
    }
    const double brute = static_cast<double>(hit) / total;
    CHECK(total == 252);
    CHECK(std::abs(brute - (1.0 - 6.0 / 252.0)) < 1e-15);
    CHECK(std::abs(setup_pass_at_k({four}, 5) - brute) < 1e-12);
    CHECK(std::abs(setup_pass_at_k({four, {true, false}}, 2) - ((1.0 - binom(6, 2) / binom(10, 2)) + 1.0) / 2) <
          1e-12);

    double prev = 0;
    for (int k = 1; k <= 10; ++k) {
        const double v = setup_pass_at_k({four, none}, k);
        CHECK(v >= prev - 1e-15);
        prev = v;
    }
    CHECK_THROWS_AS(setup_pass_at_k({{true, false}}, 3), Error);
    CHECK_THROWS_AS(setup_pass_at_k({}, 1), Error);
}

// --- real runs on the bundled Python fixture -------------------------------------------

TEST_CASE("heuristic setup on the Python fixture verifies") {
    testing::TempDir work;
    sandbox::LocalRunner runner(sandbox::LocalOptions{work.path()}, e2e_snapshots());
    HeuristicSynthesizer h;
    const auto base = default_registry().base_image_for("python");
    const auto res = synthesize_setup(mathlib_m2(), base, h, runner);
    REQUIRE(res.size() == 1);
    INFO(res[0].detail);
    CHECK(res[0].succeeded);
    REQUIRE(res[0].verification);
    const auto& st = res[0].verification->statuses;
    CHECK(st.size() == 5);
    CHECK(st.at("tests/test_ops.py::test_clamp_upper") == logparse::TestStatus::Passed);
    CHECK(std::all_of(st.begin(), st.end(), [](const auto& kv) { return kv.second == logparse::TestStatus::Passed; }));
}

TEST_CASE("attempts start from identical environments") {
    testing::TempDir work;
    sandbox::LocalRunner runner(sandbox::LocalOptions{work.path()}, e2e_snapshots());
    ScriptedSynth s;
    s.fn = [](const SetupRequest& r) {
        if (r.transcript.empty()) return run_action(r.attempt == 1 ? "touch leftover && echo made" : "test -e leftover");
        SetupAction give;
        give.kind = SetupAction::Kind::GiveUp;
        give.note = "stop";
        return give;
    };
    SynthesisOptions two;
    two.budget = 2;
    const auto res = synthesize_setup(mathlib_m2(), default_registry().base_image_for("python"), s, runner, two);
    REQUIRE(res.size() == 2);
    CHECK(res[0].transcript.commands[0].exit_code == 0);
    CHECK(res[1].transcript.commands[0].exit_code != 0);
    CHECK(res[1].failure == failure::kGaveUp);
    // The synthesizer saw the snapshot listing and its own transcript only.
    CHECK(std::find(s.seen[0].files.begin(), s.seen[0].files.end(), "mathlib/ops.py") != s.seen[0].files.end());
    for (const auto& req : s.seen) {
        for (const auto& step : req.transcript) {
            if (req.attempt == 2) CHECK(step.command == "test -e leftover");
        }
    }
}

TEST_CASE("completion synthesizer loop over a scripted client") {
    testing::TempDir work;
    sandbox::LocalRunner runner(sandbox::LocalOptions{work.path()}, e2e_snapshots());
    auto client = std::make_shared<seam::ScriptedCompletionClient>();
    client->push("setup", "acme/mathlib@m2#1", "Check the layout.\n```bash\nls tests\n```\n");
    client->push("setup", "acme/mathlib@m2#1",
                 "```bash\ncat > install_config.json <<'JSON'\n{\"install\": [\"python3 -m venv --system-site-packages "
                 "\\\"$HOME/.venv\\\"\", \"\\\"$HOME/.venv/bin/pip\\\" install -q --no-build-isolation -e .\"], "
                 "\"test_cmd\": [\"\\\"$HOME/.venv/bin/python\\\" -m pytest -rA -p no:cacheprovider\"]}\nJSON\n"
                 "cat install_config.json\n```\n");
    CompletionSynthesizer cs(client);
    const auto res = synthesize_setup(mathlib_m2(), default_registry().base_image_for("python"), cs, runner);
    REQUIRE(res.size() == 1);
    INFO(res[0].detail);
    CHECK(res[0].succeeded);
    REQUIRE(res[0].transcript.commands.size() == 1);
    CHECK(res[0].transcript.commands[0].stdout_text == "test_ops.py\ntest_stats.py\n");
    CHECK(res[0].verification->statuses.size() == 5);
}

TEST_CASE("infer_parser matches runner commands at word starts") {
    CHECK(setup::infer_parser("Rust", InstallConfig{{"cargo fetch"}, {"cargo test --offline --verbose"}}).id == "cargo");
    CHECK(setup::infer_parser("Go", InstallConfig{{"go mod download"}, {"go test ./... -v"}}).id == "gotest");
    CHECK(setup::infer_parser("JavaScript", InstallConfig{{"npm ci"}, {"node --test"}}).id == "tap");
    CHECK(setup::infer_parser("Python", InstallConfig{{"pip install -e ."}, {"python -m pytest -rA"}}).id == "pytest");
}
