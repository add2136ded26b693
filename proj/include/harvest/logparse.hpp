// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/error.hpp"
#include "harvest/trace.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace harvest::logparse {

enum class TestStatus { Passed, Failed, Skipped, Error };

std::string_view to_string(TestStatus status);  // "PASSED", ...
std::optional<TestStatus> status_from_string(std::string_view text);

using TestStatusMap = std::map<std::string, TestStatus>;

nlohmann::json to_json(const TestStatusMap& map);
TestStatusMap status_map_from_json(const nlohmann::json& j);

/// Port of the reference go-test parser: split on '\n', strip, match
/// ^--- (PASS|FAIL|SKIP): (.+) \((.+)\)$ with Python regex semantics.
TestStatusMap parse_gotest(std::string_view log);

/// Port of the reference ExUnit parser. Skip and failure-header lines assign;
/// pass lines only fill names not seen yet.
TestStatusMap parse_exunit(std::string_view log);

/// One JUnit XML document. <failure> or <error> -> FAILED, <skipped> ->
/// SKIPPED, otherwise PASSED. Throws Error(Parse) on malformed XML.
TestStatusMap parse_junit_xml(std::string_view xml);

/// Finds every <testsuite>/<testsuites> document embedded in free-form
/// output and merges them in order; unparseable fragments are skipped.
TestStatusMap parse_embedded_junit(std::string_view log);

struct LineRule {
    std::string pattern;          // Perl-syntax regex, matched against the whole line
    int name_group = 1;
    std::string name_format;      // optional, e.g. "$2.$1"; overrides name_group
    std::optional<TestStatus> status;
    int status_group = 0;         // used when status is unset
    std::map<std::string, TestStatus> status_map;
    bool tentative = false;       // only fills names not seen yet
};

enum class ParserMode { Lines, JunitXml, Builtin };
enum class Provenance { Builtin, Bootstrapped };

struct ParserSpec {
    std::string id;
    ParserMode mode = ParserMode::Lines;
    std::string builtin;          // "gotest" or "exunit" when mode == Builtin
    std::vector<LineRule> rules;  // first matching rule wins per line
    Provenance provenance = Provenance::Builtin;
};

/// Throws Error(Schema) if a rule does not compile or references a missing
/// group, or the mode/builtin combination is unknown.
void validate(const ParserSpec& spec);

nlohmann::json to_json(const ParserSpec& spec);
ParserSpec spec_from_json(const nlohmann::json& j);

/// Strips ANSI escapes, then evaluates the spec. Last outcome wins except
/// for tentative rules.
TestStatusMap apply_parser(const ParserSpec& spec, std::string_view log);
TestStatusMap apply_parser(const ParserSpec& spec, const ExecutionTrace& trace);

/// gotest, exunit, junit_xml, pytest, unittest, cargo, tap, gtest, ctest.
const std::vector<ParserSpec>& builtin_parsers();
const ParserSpec& builtin_parser(std::string_view id);

struct ParserRequest {
    int round = 1;
    std::vector<std::string> sample_logs;      // trimmed excerpts of successful traces
    std::vector<std::size_t> uncovered;        // trace indexes the last candidate missed
    std::optional<ParserSpec> previous;
};

/// Seam for a model-backed rule generator. Must return rules in the DSL.
class ParserGenerator {
public:
    virtual ~ParserGenerator() = default;
    virtual ParserSpec propose(const ParserRequest& request) = 0;
};

struct TraceCoverage {
    std::size_t trace_index = 0;  // successful traces first, then remaining
    std::size_t names = 0;
};

struct BootstrapResult {
    ParserSpec spec;
    int rounds = 0;
    std::vector<TraceCoverage> coverage;
};

class BootstrapError : public Error {
public:
    BootstrapError(const std::string& message, std::vector<TraceCoverage> coverage)
        : Error(ErrorKind::Pipeline, message), coverage_(std::move(coverage)) {}
    [[nodiscard]] const std::vector<TraceCoverage>& coverage() const { return coverage_; }

private:
    std::vector<TraceCoverage> coverage_;
};

/// Proposes specs (registry scoring first, then the generator) and accepts
/// the first one that extracts at least one name from every trace. Throws
/// BootstrapError with per-trace coverage after `max_rounds` rounds.
BootstrapResult bootstrap_parser(const std::vector<std::string>& successful_logs,
                                 const std::vector<std::string>& remaining_logs,
                                 ParserGenerator* generator, int max_rounds = 5);

} // namespace harvest::logparse
