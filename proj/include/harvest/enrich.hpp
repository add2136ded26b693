// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/instance.hpp"
#include "harvest/patch.hpp"
#include "harvest/seam.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace harvest::enrich {

/// Source of raw metadata JSON. `problems` is empty on the first call and
/// lists invariant violations of the previous answer on the repair call.
class Annotator {
public:
    virtual ~Annotator() = default;
    virtual nlohmann::json propose(const TaskInstance& instance, const std::vector<std::string>& problems) = 0;
};

/// Rule-based, no model: URLs in the problem statement give B3, test
/// constructs in the solution patch give B7, patch size bands difficulty,
/// confidence is fixed at 0.5.
class BuiltinAnnotator : public Annotator {
public:
    nlohmann::json propose(const TaskInstance& instance, const std::vector<std::string>& problems) override;
};

/// Sends kind "annotate" requests; the reply must contain a JSON object.
class CompletionAnnotator : public Annotator {
public:
    explicit CompletionAnnotator(std::shared_ptr<seam::CompletionClient> client);
    nlohmann::json propose(const TaskInstance& instance, const std::vector<std::string>& problems) override;

private:
    std::shared_ptr<seam::CompletionClient> client_;
};

struct AnnotateResult {
    std::optional<DiagnosticMetadata> metadata;
    bool failed = false;  // instance gets the annotation_failed tag
    std::string note;
};

/// One repair round on an invalid answer, then failure. Seam errors are a
/// failure too. Throws Error(Precondition) when problem_statement, patch or
/// test_patch is empty.
AnnotateResult annotate(const TaskInstance& instance, Annotator& annotator);

/// Lowest-numbered detected B code, or "A".
std::string primary_code(const std::map<std::string, bool>& detected);

/// http(s) URLs in text, in order of appearance, without duplicates.
std::vector<std::string> find_urls(const std::string& text);

/// Whether lines added by the solution patch look like tests: test-named
/// declarations (test_x, TestX, #[test], @Test, describe/it blocks) or
/// test-framework assertions (assert_eq!, assertEqual, expect(...)).
bool detect_inline_tests(const patch::SplitPatch& split);

/// easy / medium / hard from changed line count and touched file count.
std::string difficulty_band(const patch::SplitPatch& split);

// --- interfaces ---------------------------------------------------------------------

/// Function and method names declared on lines added by the solution
/// patch, in order of appearance.
std::vector<std::string> declared_symbols(const std::string& solution_patch);

/// Parses the <ANSWER> block format ("Function: ... Inputs: ... Outputs:
/// ... Description: ...", or the no-interface sentinel).
InterfaceDigest parse_interface_answer(const std::string& text);
std::string render_interface_answer(const InterfaceDigest& digest);

/// Digest of new or changed public symbols that the test patch calls.
/// With a generator, its answer is parsed and then filtered to symbols
/// declared in the solution patch and named in the test patch; without one,
/// entries come from the declarations themselves. Generator failures give
/// the sentinel digest with a note.
InterfaceDigest extract_interfaces(const patch::SplitPatch& split,
                                   const std::shared_ptr<seam::CompletionClient>& generator = nullptr,
                                   const std::string& key = {});

// --- selection ------------------------------------------------------------------------

/// Conjunction of field predicates. Terms look like "code=A",
/// "difficulty=easy", "language=python", "category=minor_bug",
/// "origin=pr_derived", "repo=acme/x", "f2p>=2", "f2p<=5".
struct Query {
    struct Term {
        std::string field;
        std::string op;  // "=", ">=", "<="
        std::string value;
    };
    std::vector<Term> terms;
};

/// Throws Error(InvalidArgument) on an unknown field or malformed term.
Query parse_query(const std::vector<std::string>& terms);

/// Matching instances sorted by instance_id.
std::vector<TaskInstance> select_subset(const std::vector<TaskInstance>& dataset, const Query& query);

} // namespace harvest::enrich
