// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/error.hpp"
#include "harvest/setup.hpp"
#include "harvest/util.hpp"
#include "harvest/validate.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <random>

using namespace harvest;
using namespace harvest::validate;
using logparse::TestStatus;
using logparse::TestStatusMap;

namespace {

const corpus::Corpus& fixture_corpus() {
    static const corpus::Corpus c = corpus::ingest_events_text(read_file(testing::fixtures_dir() + "/e2e/events.jsonl"));
    return c;
}

struct Case {
    corpus::CandidateInstance instance;
    patch::SplitPatch split;
};

Case fixture_case(const std::string& repo, int pr) {
    const auto it = fixture_corpus().prs.find({repo, pr});
    if (it != fixture_corpus().prs.end()) {
        const auto& p = it->second;
        Case c;
        c.instance.repo = repo;
        c.instance.pr = pr;
        c.instance.base_commit = p.base_commit;
        c.instance.diff_text = p.diff_text;
        c.split = patch::split_patch(patch::parse_unified_diff(p.diff_text));
        return c;
    }
    throw Error(ErrorKind::InvalidArgument, "no such fixture PR");
}

const InstallConfig& python_config() {
    static const InstallConfig c = *setup::HeuristicSynthesizer::propose({"pyproject.toml"});
    return c;
}

TestStatus random_status(std::mt19937& rng) {
    return static_cast<TestStatus>(std::uniform_int_distribution<int>(0, 3)(rng));
}

} // namespace

TEST_CASE("classify_tests basics") {
    auto t = classify_tests({{"t1", TestStatus::Failed}, {"t2", TestStatus::Passed}},
                            {{"t1", TestStatus::Passed}, {"t2", TestStatus::Passed}});
    CHECK(t.f2p == NameSet{"t1"});
    CHECK(t.p2p == NameSet{"t2"});
    CHECK(t.p2f.empty());

    t = classify_tests({{"t1", TestStatus::Passed}}, {{"t1", TestStatus::Failed}});
    CHECK(t.p2f == NameSet{"t1"});

    t = classify_tests({{"e", TestStatus::Error}, {"s", TestStatus::Skipped}, {"gone", TestStatus::Passed}},
                       {{"e", TestStatus::Passed}, {"s", TestStatus::Passed}, {"new", TestStatus::Passed}});
    CHECK(t.f2p == NameSet{"e"});
    CHECK(t.skipped == NameSet{"s"});
    CHECK(t.only_before == NameSet{"gone"});
    CHECK(t.only_after == NameSet{"new"});
    CHECK(classify_tests({{"x", TestStatus::Error}}, {{"x", TestStatus::Failed}}).f2f == NameSet{"x"});
}

TEST_CASE("classify_tests matches a pairwise oracle on random maps") {
    std::mt19937 rng(1234);
    const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int round = 0; round < 500; ++round) {
        TestStatusMap before, after;
        for (int i = 0; i < 6; ++i) {
            const auto& n = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
            if (rng() % 5) before[n] = random_status(rng);
            if (rng() % 5) after[n] = random_status(rng);
        }
        const auto t = classify_tests(before, after);

        // Oracle: look at each pool name directly.
        NameSet f2p, p2p, p2f, f2f, skip, ob, oa;
        for (const auto& n : pool) {
            const bool inb = before.count(n) > 0, ina = after.count(n) > 0;
            if (inb && !ina) ob.insert(n);
            if (!inb && ina) oa.insert(n);
            if (!inb || !ina) continue;
            const auto b = before.at(n), a = after.at(n);
            const bool bf = b == TestStatus::Failed || b == TestStatus::Error;
            const bool af = a == TestStatus::Failed || a == TestStatus::Error;
            if (b == TestStatus::Skipped || a == TestStatus::Skipped) skip.insert(n);
            else if (bf && a == TestStatus::Passed) f2p.insert(n);
            else if (b == TestStatus::Passed && a == TestStatus::Passed) p2p.insert(n);
            else if (b == TestStatus::Passed && af) p2f.insert(n);
            else if (bf && af) f2f.insert(n);
        }
        REQUIRE(t.f2p == f2p);
        REQUIRE(t.p2p == p2p);
        REQUIRE(t.p2f == p2f);
        REQUIRE(t.f2f == f2f);
        REQUIRE(t.skipped == skip);
        REQUIRE(t.only_before == ob);
        REQUIRE(t.only_after == oa);
        // Totality over the shared names.
        std::size_t shared = 0;
        for (const auto& kv : before) shared += after.count(kv.first);
        REQUIRE(f2p.size() + p2p.size() + p2f.size() + f2f.size() + skip.size() == shared);
    }
}

TEST_CASE("acceptance policy") {
    DualPassOutcome o;
    o.sets.f2p = {"a"};
    CHECK(accept(o).accepted);
    o.sets.f2p.clear();
    auto d = accept(o);
    CHECK_FALSE(d.accepted);
    CHECK(d.reasons == std::vector<std::string>{"no_f2p"});

    o.sets.f2p = {"a", "b"};
    o.sets.p2f = {"c"};
    CHECK(accept(o).accepted);
    d = accept(o, AcceptancePolicy{true});
    CHECK_FALSE(d.accepted);
    CHECK(d.reasons == std::vector<std::string>{"regression"});

    o.infra_failure = infra::kApply;
    CHECK(accept(o).reasons.front() == "infra:apply");
}

TEST_CASE("outcome JSON round trip is sorted and stable") {
    DualPassOutcome o;
    o.before = {{"z", TestStatus::Failed}, {"a", TestStatus::Passed}, {"s", TestStatus::Skipped}};
    o.after = {{"z", TestStatus::Passed}, {"a", TestStatus::Passed}, {"s", TestStatus::Passed}};
    o.sets = classify_tests(o.before, o.after);
    o.accepted = true;
    const auto j = to_json(o);
    CHECK(j["f2p"] == nlohmann::json::array({"z"}));
    CHECK(j["infra_failure"].is_null());
    const auto back = outcome_from_json(j);
    CHECK(back.sets.f2p == o.sets.f2p);
    CHECK(back.sets.skipped == NameSet{"s"});
    CHECK(to_json(back).dump() == j.dump());
    CHECK_THROWS_AS(outcome_from_json(nlohmann::json::array()), Error);
}

TEST_CASE("dual pass on the Python fixture") {
    testing::TempDir work;
    sandbox::LocalRunner runner(sandbox::LocalOptions{work.path()},
                                std::make_shared<sandbox::DirectorySnapshotSource>(testing::fixtures_dir() +
                                                                                   "/e2e/snapshots"));
    const auto base = setup::default_registry().base_image_for("python");
    const auto parser = logparse::builtin_parser("pytest");

    auto c = fixture_case("acme/mathlib", 2);
    const auto env = runner.build_environment(base, RepoSnapshot{"acme/mathlib", "m1", 2, {}}, python_config());

    SUBCASE("gold patch") {
        const auto o = dual_pass(c.instance, env, c.split, python_config(), parser, runner);
        INFO(o.detail);
        CHECK(o.accepted);
        CHECK(o.sets.f2p == NameSet{"tests/test_ops.py::test_clamp_upper"});
        CHECK(o.sets.p2f.empty());
        CHECK(o.before.size() == o.after.size());
        CHECK(o.before_start_hash == o.after_start_hash);
        CHECK_FALSE(o.before_start_hash.empty());
    }
    SUBCASE("empty solution") {
        c.split.solution_patch.clear();
        const auto o = dual_pass(c.instance, env, c.split, python_config(), parser, runner);
        CHECK_FALSE(o.accepted);
        CHECK_FALSE(o.infra_failure);
        CHECK(o.before == o.after);
        CHECK(o.sets.f2p.empty());
    }
    SUBCASE("test patch does not apply") {
        c.split.test_patch = "--- a/tests/test_ops.py\n+++ b/tests/test_ops.py\n@@ -1,1 +1,1 @@\n-no such line\n+x\n";
        const auto o = dual_pass(c.instance, env, c.split, python_config(), parser, runner);
        CHECK_FALSE(o.accepted);
        CHECK(o.infra_failure == std::optional<std::string>(infra::kApply));
        CHECK(accept(o).reasons.front() == "infra:apply");
    }
    SUBCASE("deterministic suite has no flaky tests") {
        const auto rep = flake_probe(c.instance, env, c.split, python_config(), parser, runner, 3);
        CHECK(rep.runs.size() == 3);
        CHECK(rep.flaky.empty());
        CHECK(rep.infra_runs.empty());
        CHECK_THROWS_AS(flake_probe(c.instance, env, c.split, python_config(), parser, runner, 1), Error);
    }
}

TEST_CASE("flake probe flags a parity-dependent test") {
    testing::TempDir snaps;
    write_file(snaps / "acme__flaky/f1/README", "flaky\n");
    testing::TempDir work;
    sandbox::LocalRunner runner(sandbox::LocalOptions{work.path()},
                                std::make_shared<sandbox::DirectorySnapshotSource>(snaps.path()));
    auto base = setup::default_registry().base_image_for("shell");
    const auto counter = (snaps / "counter").string();
    base.env_defaults["COUNTER"] = counter;
    const InstallConfig cfg{
        {"true"},
        {"n=$(cat \"$COUNTER\" 2>/dev/null || echo 0); echo $((n + 1)) > \"$COUNTER\"; "
         "if [ $((n % 2)) -eq 0 ]; then echo 'ok 1 - parity'; else echo 'not ok 1 - parity'; fi; "
         "echo 'ok 2 - stable'"}};
    const auto env = runner.build_environment(base, RepoSnapshot{"acme/flaky", "f1", 1, {}}, cfg);
    corpus::CandidateInstance inst;
    inst.repo = "acme/flaky";
    inst.pr = 1;
    const auto parser = logparse::builtin_parser("tap");
    const auto rep = flake_probe(inst, env, patch::SplitPatch{}, cfg, parser, runner, 3);
    CHECK(rep.flaky == NameSet{"parity"});

    // Excluded names never count as fail-to-pass. Counter is now odd: pass 1
    // fails parity, pass 2 passes it.
    DualPassOptions opts;
    const auto raw = dual_pass(inst, env, patch::SplitPatch{}, cfg, parser, runner, opts);
    CHECK(raw.sets.f2p == NameSet{"parity"});
    opts.exclude = rep.flaky;
    const auto filtered = dual_pass(inst, env, patch::SplitPatch{}, cfg, parser, runner, opts);
    CHECK(filtered.sets.f2p.empty());
    CHECK_FALSE(filtered.accepted);
}
