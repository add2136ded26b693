// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/corpus.hpp"
#include "harvest/error.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <cctype>
#include <random>

using namespace harvest;
using namespace harvest::corpus;

namespace {

PullRequestRecord pr_with(std::string title, std::string body) {
    PullRequestRecord pr;
    pr.repo = "o/r";
    pr.number = 99;
    pr.title = std::move(title);
    pr.body = std::move(body);
    return pr;
}

IssueIndex index_of(std::initializer_list<int> numbers) {
    static std::vector<IssueRecord> storage(64);
    IssueIndex idx;
    for (const int n : numbers) {
        storage[static_cast<std::size_t>(n)].number = n;
        idx[n] = &storage[static_cast<std::size_t>(n)];
    }
    return idx;
}

// Scans for '#<digits>' and walks backwards over an optional colon and
// whitespace to the preceding word, then checks the keyword list.
std::set<int> oracle_links(const std::string& text, const IssueIndex& idx) {
    static const std::set<std::string> keywords{"fix", "fixes", "fixed", "close", "closes", "closed",
                                                "resolve", "resolves", "resolved"};
    std::set<int> out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '#') continue;
        std::size_t j = i + 1;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i + 1 || j - i - 1 > 9) continue;
        if (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) continue;
        std::size_t k = i;
        bool space = false;
        while (k > 0 && std::isspace(static_cast<unsigned char>(text[k - 1]))) {
            --k;
            space = true;
        }
        bool colon = false;
        if (k > 0 && text[k - 1] == ':') {
            --k;
            colon = true;
        }
        if (!space && !colon) continue;
        std::size_t w = k;
        while (w > 0 && std::isalpha(static_cast<unsigned char>(text[w - 1]))) --w;
        if (w == k) continue;
        if (w > 0 && (std::isalnum(static_cast<unsigned char>(text[w - 1])) || text[w - 1] == '_')) continue;
        std::string word = text.substr(w, k - w);
        for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (!keywords.count(word)) continue;
        const int n = std::stoi(text.substr(i + 1, j - i - 1));
        if (idx.count(n)) out.insert(n);
    }
    return out;
}

} // namespace

TEST_CASE("ingest: empty stream and last write wins") {
    const auto empty = ingest_events_text("");
    CHECK(empty.repos.empty());
    CHECK(empty.issues.empty());
    CHECK(empty.prs.empty());

    const auto c = ingest_events_text(
        R"({"kind":"pull_request","repo":"r/x","number":7,"merged":false,"base_commit":"c","diff_text":""}
{"kind":"pull_request","repo":"r/x","number":7,"merged":true,"merge_time":"2024-01-01T00:00:00Z","base_commit":"c","diff_text":""}
)");
    REQUIRE(c.prs.size() == 1);
    CHECK(c.prs.begin()->second.merged);
}

TEST_CASE("ingest: fixture counts and rejections") {
    const auto c = ingest_events_text(read_file(testing::fixtures_dir() + "/ingest/three_repos.jsonl"));
    CHECK(c.repos.size() == 3);
    CHECK(c.issues.size() == 5);
    CHECK(c.prs.size() == 4);
    REQUIRE(c.rejections.size() == 4);
    CHECK(c.rejections[0].line == 10);   // not json
    CHECK(c.rejections[1].line == 15);   // merged without merge_time
    CHECK(c.rejections[2].line == 16);   // bad repo key
    CHECK(c.rejections[3].line == 17);   // unknown kind
    CHECK(c.repos.at("o/beta").is_long_tail_language);
    CHECK_FALSE(c.repos.at("o/alpha").is_long_tail_language);
}

TEST_CASE("link_issue_to_pr examples") {
    const auto idx = index_of({3, 4, 12});
    CHECK(link_issue_to_pr(pr_with("", "Fixes #12"), idx) == std::set<int>{12});
    CHECK(link_issue_to_pr(pr_with("", "See #12 for context"), idx).empty());
    CHECK(link_issue_to_pr(pr_with("Close #3, closes #4", ""), idx) == std::set<int>{3, 4});
    CHECK(link_issue_to_pr(pr_with("", "RESOLVED: #4; prefixes #3; fixes #77"), idx) == std::set<int>{4});
    CHECK(link_issue_to_pr(pr_with("", "fixes #12abc fixed#3"), idx).empty());
}

TEST_CASE("link_issue_to_pr agrees with a scanning oracle") {
    std::mt19937 rng(3);
    const std::vector<std::string> words{"fix", "Fixes", "FIXED", "close", "closes", "Closed", "resolve",
                                         "resolves", "resolved", "see", "refs", "prefix", "fixing", "closer"};
    const std::vector<std::string> seps{" ", "  ", ": ", ":", "\t", "", "\n"};
    const auto idx = index_of({1, 2, 3, 5, 8, 13, 21, 34});
    for (int round = 0; round < 500; ++round) {
        std::string body;
        const int parts = 1 + static_cast<int>(rng() % 5);
        for (int p = 0; p < parts; ++p) {
            body += words[rng() % words.size()] + seps[rng() % seps.size()] + "#" + std::to_string(rng() % 40);
            body += rng() % 4 == 0 ? "x" : "";
            body += rng() % 2 ? ", " : " and ";
        }
        CAPTURE(body);
        const auto got = link_issue_to_pr(pr_with("", body), idx);
        CHECK(got == oracle_links(body, idx));
        for (const int n : got) CHECK(body.find("#" + std::to_string(n)) != std::string::npos);
    }
}

TEST_CASE("filter_repos thresholds") {
    FilterPolicy p;
    const auto keep = [&](std::string lang, int stars, int closed) {
        return filter_repo(RepoRecord{"o/r", std::move(lang), stars, closed, "MIT", false}, p);
    };
    CHECK(keep("Python", 30, 20).keep);
    const auto low = keep("Python", 24, 100);
    CHECK_FALSE(low.keep);
    CHECK(low.reason == "low_stars");
    CHECK(keep("Julia", 10, 1).keep);
    CHECK(keep("Python", 25, 15).keep);
    CHECK_FALSE(keep("Python", 24, 15).keep);
    CHECK(keep("Python", 25, 14).reason == "low_closed_issues");
    CHECK_FALSE(keep("Julia", 9, 1).keep);
    CHECK_FALSE(keep("Julia", 10, 0).keep);
    const auto odd = keep("Brainfck", 10, 1);
    CHECK(odd.keep);
    CHECK(odd.notes == std::vector<std::string>{"unknown_language"});

    const auto r = filter_repos({{"o/a", "Go", 30, 20, "MIT", false}, {"o/b", "Go", 3, 20, "MIT", false}}, p);
    CHECK(r.kept == std::set<std::string>{"o/a"});
    CHECK(r.decisions.size() == 2);
}

TEST_CASE("filter_instance order of checks") {
    FilterPolicy p;
    const std::string with_tests = "--- a/tests/t.py\n+++ b/tests/t.py\n@@ -1 +1 @@\n-a\n+b\n";
    const std::string no_tests = "--- a/src/s.py\n+++ b/src/s.py\n@@ -1 +1 @@\n-a\n+b\n";
    CandidateInstance c;
    c.diff_text = with_tests;
    RepoRecord mit{"o/r", "Python", 30, 20, "MIT", false};
    RepoRecord prop{"o/r", "Python", 30, 20, "LicenseRef-Proprietary", false};
    PullRequestRecord merged;
    merged.merged = true;
    PullRequestRecord open;
    CHECK(filter_instance(c, mit, merged, true, p).keep);
    CHECK(filter_instance(c, prop, open, false, p).reason == "license");
    CHECK(filter_instance(c, mit, open, false, p).reason == "issue_not_resolved");
    CHECK(filter_instance(c, mit, open, true, p).reason == "pr_not_merged");
    c.diff_text = no_tests;
    CHECK(filter_instance(c, mit, merged, true, p).reason == "no_tests");
}

TEST_CASE("funnel_counts") {
    const PrKey a{"o/a", 1}, b{"o/a", 2}, c{"o/b", 3}, d{"o/b", 4};
    const auto one = funnel_counts({{"PRs", {a, b, c, d}}});
    REQUIRE(one.stages.size() == 1);
    CHECK(one.stages[0].prs == 4);
    CHECK(one.stages[0].repos == 2);
    CHECK_THROWS_AS(funnel_counts({{"s1", {a}}, {"s2", {a, b}}}), Error);
    try {
        funnel_counts({{"s1", {a}}, {"s2", {a, b}}});
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("s2") != std::string::npos);
    }
}

TEST_CASE("mine on the ingest fixture") {
    const auto corpus = ingest_events_text(read_file(testing::fixtures_dir() + "/ingest/three_repos.jsonl"));
    const auto m = mine(corpus, FilterPolicy{});
    const auto report = funnel_counts(m.stages);
    std::vector<std::uint64_t> prs;
    for (const auto& s : report.stages) prs.push_back(s.prs);
    CHECK(prs == std::vector<std::uint64_t>{4, 3, 2, 2, 2});
    REQUIRE(m.candidates.size() == 2);
    CHECK(m.candidates[0].repo == "o/alpha");
    CHECK(m.candidates[0].problem_statement == "crash\n\nboom");
    CHECK(format_rfc3339(*m.candidates[0].created_at) == "2024-01-01T00:00:00Z");
    CHECK(format_rfc3339(*m.candidates[1].created_at) == "2024-03-01T00:00:00Z");
    CHECK(m.repo_decisions.at("o/gamma").reason == "low_stars");
    std::map<std::string, std::string> reasons;
    for (const auto& r : m.rejections) reasons[r.repo + "#" + std::to_string(r.pr)] = r.reason;
    CHECK(reasons == std::map<std::string, std::string>{{"o/gamma#9", "no_tests"}, {"o/gamma#10", "no_linked_issue"}});
}

TEST_CASE("policy json rejects unknown keys") {
    CHECK_THROWS_AS(policy_from_json(nlohmann::json{{"min_stars", 3}}), Error);
    CHECK_THROWS_AS(policy_from_json(nlohmann::json{{"permissive_licenses", nlohmann::json::array()}}), Error);
    const auto p = policy_from_json(to_json(FilterPolicy{}));
    CHECK(p.high_resource_min_stars == 25);
}
