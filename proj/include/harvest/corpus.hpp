// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/metrics.hpp"
#include "harvest/util.hpp"

#include <json.hpp>

#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace harvest::corpus {

struct RepoRecord {
    std::string full_name;  // "owner/name"
    std::string primary_language;
    std::int64_t stars = 0;
    std::int64_t closed_issue_count = 0;
    std::string license_id;
    bool is_long_tail_language = false;
};

enum class IssueState { Open, Resolved };

struct IssueRecord {
    std::string repo;
    int number = 0;
    std::string title;
    std::string body;
    IssueState state = IssueState::Open;
    std::optional<Timestamp> created_at;
};

struct PullRequestRecord {
    std::string repo;
    int number = 0;
    std::string title;
    std::string body;
    bool merged = false;
    std::optional<Timestamp> merge_time;
    std::string base_commit;
    std::string diff_text;
};

struct CandidateInstance {
    std::string repo;
    int pr = 0;
    std::optional<int> linked_issue;   // lowest linked issue number
    std::vector<int> linked_issues;    // all of them, ascending
    std::string problem_statement;
    std::string diff_text;
    std::string base_commit;
    std::string language;
    std::string license_id;
    std::optional<Timestamp> merge_time;
    std::optional<Timestamp> created_at;
};

struct FilterPolicy {
    std::int64_t high_resource_min_stars = 25;
    std::int64_t high_resource_min_closed_issues = 15;
    std::int64_t long_tail_min_stars = 10;
    std::int64_t long_tail_min_closed_issues = 1;
    std::set<std::string> permissive_licenses{"MIT", "Apache-2.0", "BSD-2-Clause", "BSD-3-Clause", "ISC"};
    std::set<std::string> high_resource_languages{"Python", "Java", "Go", "JavaScript", "TypeScript", "C++"};
    /// Languages recognized as long-tail; anything outside both sets is
    /// treated as long-tail with an "unknown_language" annotation.
    std::set<std::string> long_tail_languages{"C",      "C#",      "Clojure", "Dart",  "Elixir", "Erlang",
                                              "Haskell", "Julia",  "Kotlin",  "Lua",   "OCaml",  "PHP",
                                              "Perl",    "R",      "Ruby",    "Rust",  "Scala",  "Swift",
                                              "Zig",     "Nim",    "Crystal", "Groovy", "F#",    "Shell"};

    void check() const;  // throws Error(InvalidArgument)
};

nlohmann::json to_json(const FilterPolicy& p);
FilterPolicy policy_from_json(const nlohmann::json& j);

// --- ingestion --------------------------------------------------------------

struct Rejection {
    std::size_t line = 0;
    std::string reason;
};

struct Corpus {
    std::map<std::string, RepoRecord> repos;
    std::map<std::pair<std::string, int>, IssueRecord> issues;
    std::map<std::pair<std::string, int>, PullRequestRecord> prs;
    std::vector<Rejection> rejections;
};

/// Reads newline-delimited records with "kind" in {repo, issue,
/// pull_request}. Later records replace earlier ones with the same key;
/// malformed lines are rejected with a reason and skipped.
Corpus ingest_events(std::istream& source);
Corpus ingest_events_text(std::string_view text);

using IssueIndex = std::map<int, const IssueRecord*>;

IssueIndex issue_index(const Corpus& corpus, const std::string& repo);

/// Issue numbers referenced as "<keyword> #N" in the PR title or body,
/// restricted to numbers present in `issues`. Keywords: fix, fixes, fixed,
/// close, closes, closed, resolve, resolves, resolved (any case).
std::set<int> link_issue_to_pr(const PullRequestRecord& pr, const IssueIndex& issues);

// --- filters ----------------------------------------------------------------

struct Decision {
    bool keep = true;
    std::string reason;                // empty when kept
    std::vector<std::string> notes;    // e.g. "unknown_language"
};

enum class LanguageTier { HighResource, LongTail, Unknown };
LanguageTier language_tier(const std::string& language, const FilterPolicy& policy);

struct RepoFilterResult {
    std::set<std::string> kept;
    std::map<std::string, Decision> decisions;  // every input repo
};

RepoFilterResult filter_repos(const std::vector<RepoRecord>& repos, const FilterPolicy& policy);
Decision filter_repo(const RepoRecord& repo, const FilterPolicy& policy);

/// Checks in order: license, issue resolved, PR merged, non-empty test patch.
/// `issue_resolved` covers all linked issues.
Decision filter_instance(const CandidateInstance& candidate, const RepoRecord& repo, const PullRequestRecord& pr,
                         bool issue_resolved, const FilterPolicy& policy);

// --- funnel -----------------------------------------------------------------

using PrKey = std::pair<std::string, int>;

struct FunnelStageInput {
    std::string name;
    std::set<PrKey> kept;
};

/// Per-stage (PR count, repo count). Throws Error(Pipeline) naming the first
/// stage whose kept set is not a subset of its predecessor's.
metrics::FunnelReport funnel_counts(const std::vector<FunnelStageInput>& stages);

namespace stage {
inline constexpr const char* kPrs = "PRs";
inline constexpr const char* kWithTests = "PRs with tests";
inline constexpr const char* kLinked = "PR linked with issue and test";
inline constexpr const char* kInstance = "Instance filters";
inline constexpr const char* kRepo = "Repo based filtering";
inline constexpr const char* kF2p = "Successful tasks w/ F2P";
inline constexpr const char* kIssueText = "Issue text based filtering";
} // namespace stage

struct PrRejection {
    std::string repo;
    int pr = 0;
    std::string stage;
    std::string reason;
};

struct MineResult {
    std::vector<CandidateInstance> candidates;        // sorted by (repo, pr)
    std::vector<PrRejection> rejections;              // sorted by (repo, pr)
    std::map<std::string, Decision> repo_decisions;
    std::vector<FunnelStageInput> stages;             // PRs .. repo filter
};

/// Linkage, then instance filters, then repository filters.
MineResult mine(const Corpus& corpus, const FilterPolicy& policy);

nlohmann::json to_json(const CandidateInstance& c);
CandidateInstance candidate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RepoRecord& r);
RepoRecord repo_from_json(const nlohmann::json& j);

} // namespace harvest::corpus
