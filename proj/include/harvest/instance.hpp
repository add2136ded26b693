// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/util.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace harvest {

/// Diagnostic codes in rubric order; "A" is a clean task.
const std::vector<std::string>& diagnostic_codes();          // A, B1..B7
const std::vector<std::string>& pr_category_names();         // critical_bug ... documentation_enh
const std::vector<std::string>& difficulty_levels();         // easy, medium, hard
const std::vector<std::string>& intent_completeness_levels(); // complete, partial, insufficient

struct DiagnosticMetadata {
    std::string code = "A";
    std::map<std::string, bool> detected_issues;  // B1..B7, all present
    std::string intent_completeness = "complete";
    std::vector<std::string> test_alignment_issues;
    std::vector<std::string> external_urls;
    std::vector<std::string> pr_categories;
    std::string difficulty = "easy";
    double confidence = 0.5;
    std::string reasoning;

    bool operator==(const DiagnosticMetadata&) const = default;
};

/// Every violated invariant, one message each; empty when valid.
std::vector<std::string> metadata_violations(const DiagnosticMetadata& m);

/// JSON with the annotation output field names. from_json validates and
/// throws Error(Schema) on an invariant violation.
nlohmann::json to_json(const DiagnosticMetadata& m);
DiagnosticMetadata metadata_from_json(const nlohmann::json& j);

struct InterfaceEntry {
    std::string kind;  // "method" or "function"
    std::string signature;
    std::string inputs;
    std::string outputs;
    std::string description;

    bool operator==(const InterfaceEntry&) const = default;
};

struct InterfaceDigest {
    std::vector<InterfaceEntry> entries;
    bool empty_sentinel = true;
    std::string note;  // failure note when the generator could not be used

    bool operator==(const InterfaceDigest&) const = default;
};

inline constexpr const char* kNoInterfacesSentinel = "No new interfaces are introduced.";

nlohmann::json to_json(const InterfaceDigest& d);
InterfaceDigest interface_digest_from_json(const nlohmann::json& j);

namespace origin {
inline constexpr const char* kIssueLinked = "issue_linked";
inline constexpr const char* kPrDerived = "pr_derived";
} // namespace origin

struct TaskInstance {
    std::string instance_id;
    std::string repo;
    int pr = 0;
    std::string language;
    std::string license_id;
    std::string base_commit;
    std::string problem_statement;
    std::string patch;
    std::string test_patch;
    std::vector<std::string> install;
    std::vector<std::string> test_cmd;
    std::vector<std::string> fail_to_pass;
    std::vector<std::string> pass_to_pass;
    std::string origin = origin::kIssueLinked;
    std::string validation = "dual_pass";  // or "unvalidated"
    std::vector<std::string> tags;         // e.g. annotation_failed
    std::optional<DiagnosticMetadata> metadata;
    std::optional<InterfaceDigest> interface_digest;
    std::optional<Timestamp> created_at;
    std::optional<Timestamp> merge_time;

    bool operator==(const TaskInstance&) const = default;
};

/// "acme/mathlib", 5 -> "acme__mathlib-5".
std::string make_instance_id(const std::string& repo, int pr);

/// Throws Error(Schema) naming the instance and field when a released
/// record is invalid: empty or unsorted F2P/P2P, overlap between them,
/// an id that does not match repo and PR, bad origin or metadata.
void check_instance(const TaskInstance& t);

/// Deterministic: keys sorted, optional fields omitted when unset.
nlohmann::json to_json(const TaskInstance& t);
TaskInstance instance_from_json(const nlohmann::json& j);

} // namespace harvest
