// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/error.hpp"
#include "harvest/quality.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <cmath>

using namespace harvest;
using namespace harvest::quality;

namespace {

const std::string kWhy =
    "The report names the function, the input that misbehaves, the observed result and the expected one, so a fix "
    "can be checked directly.";

TaskInstance sample() {
    TaskInstance t;
    t.instance_id = "acme__x-1";
    t.repo = "acme/x";
    t.pr = 1;
    t.problem_statement = "clamp ignores the upper bound";
    t.patch = "diff --git a/x.py b/x.py\n";
    t.test_patch = "diff --git a/tests/test_x.py b/tests/test_x.py\n";
    return t;
}

class Capture : public seam::CompletionClient {
public:
    std::vector<seam::CompletionRequest> seen;
    std::string reply;
    std::string complete(const seam::CompletionRequest& r) override {
        seen.push_back(r);
        return reply;
    }
};

JudgeVerdict v(const std::string& judge, const std::string& id, int score) { return {judge, id, {score, kWhy}}; }

std::map<std::string, bool> keeps(const std::vector<bool>& k) {
    std::map<std::string, bool> m;
    for (std::size_t i = 0; i < k.size(); ++i) m["i" + std::to_string(100 + i)] = k[i];
    return m;
}

std::map<std::string, ClarityLabel> labels(const std::vector<bool>& under) {
    std::map<std::string, ClarityLabel> m;
    for (std::size_t i = 0; i < under.size(); ++i) {
        m["i" + std::to_string(100 + i)] = under[i] ? ClarityLabel::Underspecified : ClarityLabel::WellSpecified;
    }
    return m;
}

} // namespace

TEST_CASE("binarization boundary") {
    CHECK(binarize(0) == ClarityLabel::WellSpecified);
    CHECK(binarize(1) == ClarityLabel::WellSpecified);
    CHECK(binarize(2) == ClarityLabel::Underspecified);
    CHECK(binarize(3) == ClarityLabel::Underspecified);
    CHECK_THROWS_AS(binarize(4), Error);
    CHECK_THROWS_AS(binarize(-1), Error);
}

TEST_CASE("score_issue with scripted judges") {
    auto client = std::make_shared<seam::ScriptedCompletionClient>();
    const Judge judge{"j1", client};

    client->push_any("judge", kWhy + "\n\n0");
    auto verdict = score_issue(sample(), judge, PromptVariant::Verified);
    CHECK(verdict.score.value == 0);
    CHECK(verdict.score.rationale == kWhy);
    CHECK(verdict.judge_id == "j1");
    CHECK(verdict.instance_id == "acme__x-1");

    client->push_any("judge", kWhy + " Option: 5");
    client->push_any("judge", kWhy + " Option: 2");
    CHECK(score_issue(sample(), judge, PromptVariant::Verified).score.value == 2);

    client->push_any("judge", R"({"score": 1, "rationale": ")" + kWhy + R"("})");
    CHECK(score_issue(sample(), judge, PromptVariant::Verified).score.value == 1);

    // Too short a rationale counts as unusable too.
    client->push_any("judge", "fine. 0");
    client->push_any("judge", "still fine. 0");
    CHECK_THROWS_AS(score_issue(sample(), judge, PromptVariant::Verified), Error);
    CHECK(client->calls() == 6);

    auto no_patch = sample();
    no_patch.patch.clear();
    try {
        score_issue(no_patch, judge, PromptVariant::VerifiedE);
        FAIL("expected a precondition error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Precondition);
    }
}

TEST_CASE("judge receives exactly the variant's fields") {
    auto cap = std::make_shared<Capture>();
    cap->reply = kWhy + " 1";
    const Judge judge{"j2", cap};
    score_issue(sample(), judge, PromptVariant::Verified);
    score_issue(sample(), judge, PromptVariant::VerifiedE);
    REQUIRE(cap->seen.size() == 2);
    CHECK(cap->seen[0].kind == "judge");
    CHECK(cap->seen[0].key == "j2:acme__x-1");
    CHECK_FALSE(cap->seen[0].payload.contains("patch"));
    CHECK_FALSE(cap->seen[0].payload.contains("test_patch"));
    CHECK(cap->seen[1].payload["patch"] == sample().patch);
    CHECK(cap->seen[1].payload["test_patch"] == sample().test_patch);
    CHECK(cap->seen[1].payload["variant"] == "verified_e");
    CHECK(prompt_variant_from_string("verified_plus") == PromptVariant::VerifiedPlus);
    CHECK_THROWS_AS(prompt_variant_from_string("nope"), Error);
}

TEST_CASE("aggregate_human") {
    CHECK(aggregate_human({0, 0, 1}) == ClarityLabel::WellSpecified);
    CHECK(aggregate_human({0, 1, 2}) == ClarityLabel::Underspecified);
    CHECK(aggregate_human({3, 3, 3}) == ClarityLabel::Underspecified);
    CHECK(aggregate_human({1, 1, 1}) == ClarityLabel::WellSpecified);
    CHECK_THROWS_AS(aggregate_human({0, 1}), Error);
    CHECK_THROWS_AS(aggregate_human({0, 1, 1, 1}), Error);
    CHECK_THROWS_AS(aggregate_human({0, 1, 7}), Error);
}

TEST_CASE("ensemble strategies") {
    CHECK(ensemble({v("a", "x", 0), v("b", "x", 1), v("c", "x", 1)}, Strategy::Consensus));
    CHECK_FALSE(ensemble({v("a", "x", 0), v("b", "x", 0), v("c", "x", 2)}, Strategy::Consensus));
    CHECK(ensemble({v("a", "x", 0), v("b", "x", 1), v("c", "x", 3)}, Strategy::Average));   // 1.33
    CHECK_FALSE(ensemble({v("a", "x", 1), v("b", "x", 2)}, Strategy::Average));             // 1.5
    CHECK(ensemble({v("a", "x", 1)}, Strategy::Single));
    CHECK_FALSE(ensemble({v("a", "x", 2)}, Strategy::Single));
    CHECK_THROWS_AS(ensemble({}, Strategy::Consensus), Error);
    CHECK_THROWS_AS(ensemble({v("a", "x", 0), v("b", "x", 0)}, Strategy::Single), Error);
    CHECK_THROWS_AS(ensemble({v("a", "x", 0)}, Strategy::Average), Error);

    // Consensus is the strictest rule: every triple, exhaustively.
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            for (int c = 0; c < 4; ++c) {
                const std::vector<JudgeVerdict> vs{v("a", "x", a), v("b", "x", b), v("c", "x", c)};
                if (!ensemble(vs, Strategy::Consensus)) continue;
                for (const auto& one : vs) CHECK(ensemble({one}, Strategy::Single));
                CHECK(ensemble(vs, Strategy::Average));
            }
        }
    }

    const auto per = apply_ensemble({v("a", "p", 0), v("b", "p", 1), v("a", "q", 0), v("b", "q", 3)}, Strategy::Consensus);
    CHECK(per == std::map<std::string, bool>{{"p", true}, {"q", false}});
    const auto only_b = apply_ensemble({v("a", "p", 0), v("b", "p", 2)}, Strategy::Single, "b");
    CHECK(only_b == std::map<std::string, bool>{{"p", false}});
}

TEST_CASE("evaluate_filter metrics") {
    // Perfect: drop exactly the underspecified ones.
    auto m = evaluate_filter(keeps({false, true, false, true}), labels({true, false, true, false}));
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);

    m = evaluate_filter(keeps({true, true, true}), labels({true, false, false}));
    CHECK(m.recall == 0.0);
    CHECK(m.precision == 0.0);
    CHECK(m.precision_undefined);
    CHECK_FALSE(m.recall_undefined);
    CHECK(m.f1_undefined);

    // TP=6, FP=2, FN=4, TN=8.
    std::vector<bool> keep, under;
    for (int i = 0; i < 6; ++i) { keep.push_back(false); under.push_back(true); }
    for (int i = 0; i < 2; ++i) { keep.push_back(false); under.push_back(false); }
    for (int i = 0; i < 4; ++i) { keep.push_back(true); under.push_back(true); }
    for (int i = 0; i < 8; ++i) { keep.push_back(true); under.push_back(false); }
    m = evaluate_filter(keeps(keep), labels(under));
    CHECK(m.tp == 6);
    CHECK(m.fp == 2);
    CHECK(m.fn == 4);
    CHECK(m.tn == 8);
    CHECK(std::abs(m.precision - 0.75) < 1e-12);
    CHECK(std::abs(m.recall - 0.6) < 1e-12);
    CHECK(std::abs(m.f1 - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(m.accuracy - 0.7) < 1e-12);

    // FP = FN gives precision = recall = F1.
    m = evaluate_filter(keeps({false, false, true, true, true}), labels({true, false, true, false, false}));
    CHECK(m.fp == m.fn);
    CHECK(m.precision == m.recall);
    CHECK(std::abs(m.f1 - m.precision) < 1e-15);

    auto extra = keeps({true});
    extra["stray"] = true;
    try {
        evaluate_filter(extra, labels({true, false}));
        FAIL("expected key mismatch");
    } catch (const Error& e) {
        const std::string what = e.what();
        CHECK(what.find("stray") != std::string::npos);
        CHECK(what.find("i101") != std::string::npos);
    }
}

TEST_CASE("annotation and verdict files") {
    const auto ann = read_annotations(
        "{\"instance_id\": \"a\", \"scores\": [0, 0, 1]}\n\n{\"instance_id\": \"b\", \"scores\": [0, 1, 2]}\n");
    CHECK(ann.size() == 2);
    const auto lab = human_labels(ann);
    CHECK(lab.at("a") == ClarityLabel::WellSpecified);
    CHECK(lab.at("b") == ClarityLabel::Underspecified);
    CHECK_THROWS_AS(read_annotations("{\"instance_id\": \"a\", \"scores\": [0, 1]}\n"), Error);
    CHECK_THROWS_AS(read_annotations("not json\n"), Error);

    testing::TempDir d;
    const auto path = d / "verdicts.ndjson";
    append_verdict(path, v("j1", "a", 0));
    append_verdict(path, v("j2", "a", 2));
    append_verdict(path, v("j1", "a", 3));  // same key again: first record stands
    const auto back = read_verdicts(read_file(path));
    REQUIRE(back.size() == 2);
    CHECK(back[0].score.value == 0);
    CHECK(back[0].score.rationale == kWhy);
    CHECK(back[1].judge_id == "j2");
    CHECK(verdict_line(back[0]) == verdict_line(v("j1", "a", 0)));
}
