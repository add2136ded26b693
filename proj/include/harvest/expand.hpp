// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/corpus.hpp"
#include "harvest/patch.hpp"
#include "harvest/seam.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace harvest::expand {

/// Merged PRs of `repo` with a non-empty test patch that are not in
/// `issue_linked`. Empty when the repository has no verified config.
std::vector<corpus::PullRequestRecord> eligible_prs(const std::string& repo, const std::set<int>& issue_linked,
                                                    const std::vector<corpus::PullRequestRecord>& prs,
                                                    bool has_verified_config);

struct SyntheticStatement {
    std::string title;
    std::string problem;
    std::string root_cause;
    std::string fix_expected_behavior;
    std::string risk_validation;
    int source_pr = 0;

    bool operator==(const SyntheticStatement&) const = default;
};

/// Markdown with bold section headers, the form used as problem_statement.
std::string render(const SyntheticStatement& s);

/// Reads the five sections (Title, Problem, Root Cause, Fix / Expected
/// Behavior, Risk & Validation). Throws Error(Parse) naming missing or
/// empty sections.
SyntheticStatement parse_statement(const std::string& text, int source_pr = 0);

struct LeakageOptions {
    double max_overlap = 0.3;
    std::size_t min_token_length = 4;
};

struct LeakageReport {
    bool clean = true;
    std::vector<std::string> path_hits;   // solution-patch paths quoted verbatim
    std::vector<std::string> token_hits;  // added-line identifiers found in the statement
    std::size_t token_count = 0;          // distinct identifiers on added solution lines
    double overlap = 0.0;
};

/// Identifiers (length >= min) on lines added by the patch, deduplicated.
std::set<std::string> added_identifiers(const std::string& solution_patch, std::size_t min_length = 4);

/// Suspicious when a solution file path appears in the rendered statement,
/// or when more than max_overlap of the added identifiers occur in it as
/// whole words (case-sensitive).
LeakageReport leakage_check(const SyntheticStatement& statement, const std::string& solution_patch,
                            const LeakageOptions& options = {});

/// Template statement from the PR title and body with solution paths and
/// added identifiers replaced by "[redacted]".
SyntheticStatement builtin_statement(const corpus::PullRequestRecord& pr, const patch::SplitPatch& split);

struct GenerateResult {
    std::optional<SyntheticStatement> statement;
    std::string skip_reason;  // "format" or "leakage" when skipped
    std::string detail;
    LeakageReport leakage;
};

/// Asks the generator (kind "statement", key "<repo>#<pr>") for a
/// statement, with one repair round on a format violation; without a
/// generator the builtin template is used. The result must pass
/// leakage_check.
GenerateResult generate_statement(const corpus::PullRequestRecord& pr, const patch::SplitPatch& split,
                                  const std::shared_ptr<seam::CompletionClient>& generator = nullptr,
                                  const LeakageOptions& options = {});

nlohmann::json to_json(const LeakageReport& r);

} // namespace harvest::expand
