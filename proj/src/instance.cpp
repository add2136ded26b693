// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/instance.hpp"
#include "harvest/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>

namespace harvest {

using nlohmann::json;

const std::vector<std::string>& diagnostic_codes() {
    static const std::vector<std::string> v{"A", "B1", "B2", "B3", "B4", "B5", "B6", "B7"};
    return v;
}

const std::vector<std::string>& pr_category_names() {
    static const std::vector<std::string> v{"critical_bug",   "major_bug",        "minor_bug",   "regression_bug",
                                            "edge_case_bug",  "performance_bug",  "security_bug", "integration_feat",
                                            "core_feat",      "ui_ux_feat",       "dev_ops_enh", "documentation_enh"};
    return v;
}

const std::vector<std::string>& difficulty_levels() {
    static const std::vector<std::string> v{"easy", "medium", "hard"};
    return v;
}

const std::vector<std::string>& intent_completeness_levels() {
    static const std::vector<std::string> v{"complete", "partial", "insufficient"};
    return v;
}

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw Error(ErrorKind::Schema, fmt::format("{}: missing field '{}'", where, key));
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, fmt::format("{}: field '{}': {}", where, key, e.what()));
    }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorKind::Schema, where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) throw Error(ErrorKind::Schema, fmt::format("{}: unknown field '{}'", where, k));
    }
}

} // namespace

std::vector<std::string> metadata_violations(const DiagnosticMetadata& m) {
    std::vector<std::string> out;
    if (!contains(diagnostic_codes(), m.code)) out.push_back("code '" + m.code + "' is not A or B1..B7");
    for (std::size_t i = 1; i < diagnostic_codes().size(); ++i) {
        if (!m.detected_issues.count(diagnostic_codes()[i])) out.push_back("detected_issues lacks " + diagnostic_codes()[i]);
    }
    for (const auto& [k, v] : m.detected_issues) {
        if (k == "A" || !contains(diagnostic_codes(), k)) out.push_back("detected_issues has unknown key " + k);
    }
    if (m.code == "A") {
        for (const auto& [k, v] : m.detected_issues) {
            if (v) out.push_back("code A but " + k + " is detected");
        }
    } else if (contains(diagnostic_codes(), m.code)) {
        const auto it = m.detected_issues.find(m.code);
        if (it == m.detected_issues.end() || !it->second) out.push_back("code " + m.code + " but it is not detected");
    }
    if (!contains(intent_completeness_levels(), m.intent_completeness)) {
        out.push_back("intent_completeness '" + m.intent_completeness + "' is not allowed");
    }
    if (m.pr_categories.empty()) out.push_back("pr_categories is empty");
    for (const auto& c : m.pr_categories) {
        if (!contains(pr_category_names(), c)) out.push_back("unknown pr category '" + c + "'");
    }
    if (!contains(difficulty_levels(), m.difficulty)) out.push_back("difficulty '" + m.difficulty + "' is not allowed");
    if (!(m.confidence >= 0.0 && m.confidence <= 1.0)) out.push_back("confidence outside [0, 1]");
    return out;
}

json to_json(const DiagnosticMetadata& m) {
    return json{{"code", m.code},
                {"confidence", m.confidence},
                {"detected_issues", m.detected_issues},
                {"difficulty", m.difficulty},
                {"external_urls", m.external_urls},
                {"intent_completeness", m.intent_completeness},
                {"pr_categories", m.pr_categories},
                {"reasoning", m.reasoning},
                {"test_alignment_issues", m.test_alignment_issues}};
}

DiagnosticMetadata metadata_from_json(const json& j) {
    const std::string where = "metadata";
    if (!j.is_object()) throw Error(ErrorKind::Schema, where + ": expected an object");
    DiagnosticMetadata m;
    m.code = field<std::string>(j, "code", where);
    m.detected_issues = field<std::map<std::string, bool>>(j, "detected_issues", where);
    m.intent_completeness = field<std::string>(j, "intent_completeness", where);
    m.test_alignment_issues = j.contains("test_alignment_issues")
                                  ? field<std::vector<std::string>>(j, "test_alignment_issues", where)
                                  : std::vector<std::string>{};
    m.external_urls = j.contains("external_urls") ? field<std::vector<std::string>>(j, "external_urls", where)
                                                  : std::vector<std::string>{};
    m.pr_categories = field<std::vector<std::string>>(j, "pr_categories", where);
    m.difficulty = field<std::string>(j, "difficulty", where);
    m.confidence = field<double>(j, "confidence", where);
    m.reasoning = j.contains("reasoning") ? field<std::string>(j, "reasoning", where) : std::string{};
    const auto bad = metadata_violations(m);
    if (!bad.empty()) throw Error(ErrorKind::Schema, "metadata: " + join(bad, "; "));
    return m;
}

json to_json(const InterfaceDigest& d) {
    json entries = json::array();
    for (const auto& e : d.entries) {
        entries.push_back({{"kind", e.kind},
                           {"signature", e.signature},
                           {"inputs", e.inputs},
                           {"outputs", e.outputs},
                           {"description", e.description}});
    }
    json j{{"entries", entries}, {"empty_sentinel", d.empty_sentinel}};
    if (!d.note.empty()) j["note"] = d.note;
    return j;
}

InterfaceDigest interface_digest_from_json(const json& j) {
    const std::string where = "interface_digest";
    reject_unknown(j, {"entries", "empty_sentinel", "note"}, where);
    InterfaceDigest d;
    for (const auto& e : field<json>(j, "entries", where)) {
        InterfaceEntry x;
        x.kind = field<std::string>(e, "kind", where);
        x.signature = field<std::string>(e, "signature", where);
        x.inputs = e.value("inputs", "");
        x.outputs = e.value("outputs", "");
        x.description = e.value("description", "");
        if (x.kind != "method" && x.kind != "function") {
            throw Error(ErrorKind::Schema, where + ": entry kind must be method or function");
        }
        d.entries.push_back(std::move(x));
    }
    d.empty_sentinel = field<bool>(j, "empty_sentinel", where);
    d.note = j.value("note", "");
    if (d.empty_sentinel != d.entries.empty()) {
        throw Error(ErrorKind::Schema, where + ": empty_sentinel must be set exactly when there are no entries");
    }
    return d;
}

std::string make_instance_id(const std::string& repo, int pr) {
    auto id = repo;
    const auto slash = id.find('/');
    if (slash != std::string::npos) id.replace(slash, 1, "__");
    return fmt::format("{}-{}", id, pr);
}

void check_instance(const TaskInstance& t) {
    const auto fail = [&](const char* fieldname, const std::string& why) {
        throw Error(ErrorKind::Schema, fmt::format("instance {}: {}: {}", t.instance_id, fieldname, why));
    };
    if (t.instance_id != make_instance_id(t.repo, t.pr)) fail("instance_id", "does not match repo and pr");
    if (t.fail_to_pass.empty()) fail("fail_to_pass", "empty");
    if (!std::is_sorted(t.fail_to_pass.begin(), t.fail_to_pass.end()) ||
        std::adjacent_find(t.fail_to_pass.begin(), t.fail_to_pass.end()) != t.fail_to_pass.end()) {
        fail("fail_to_pass", "not a sorted set");
    }
    if (!std::is_sorted(t.pass_to_pass.begin(), t.pass_to_pass.end()) ||
        std::adjacent_find(t.pass_to_pass.begin(), t.pass_to_pass.end()) != t.pass_to_pass.end()) {
        fail("pass_to_pass", "not a sorted set");
    }
    std::vector<std::string> both;
    std::set_intersection(t.fail_to_pass.begin(), t.fail_to_pass.end(), t.pass_to_pass.begin(), t.pass_to_pass.end(),
                          std::back_inserter(both));
    if (!both.empty()) fail("pass_to_pass", "shares " + both.front() + " with fail_to_pass");
    if (t.origin != origin::kIssueLinked && t.origin != origin::kPrDerived) fail("origin", "'" + t.origin + "'");
    if (t.validation != "dual_pass" && t.validation != "unvalidated") fail("validation", "'" + t.validation + "'");
    if (t.patch.empty()) fail("patch", "empty");
    if (t.test_patch.empty()) fail("test_patch", "empty");
    if (t.test_cmd.empty()) fail("test_cmd", "empty");
    if (t.metadata) {
        const auto bad = metadata_violations(*t.metadata);
        if (!bad.empty()) fail("metadata", join(bad, "; "));
    }
}

json to_json(const TaskInstance& t) {
    json j{{"instance_id", t.instance_id},
           {"repo", t.repo},
           {"pr", t.pr},
           {"language", t.language},
           {"license_id", t.license_id},
           {"base_commit", t.base_commit},
           {"problem_statement", t.problem_statement},
           {"patch", t.patch},
           {"test_patch", t.test_patch},
           {"install", t.install},
           {"test_cmd", t.test_cmd},
           {"fail_to_pass", t.fail_to_pass},
           {"pass_to_pass", t.pass_to_pass},
           {"origin", t.origin},
           {"validation", t.validation},
           {"tags", t.tags}};
    if (t.metadata) j["metadata"] = to_json(*t.metadata);
    if (t.interface_digest) j["interface_digest"] = to_json(*t.interface_digest);
    if (t.created_at) j["created_at"] = format_rfc3339(*t.created_at);
    if (t.merge_time) j["merge_time"] = format_rfc3339(*t.merge_time);
    return j;
}

TaskInstance instance_from_json(const json& j) {
    const std::string where = j.is_object() && j.contains("instance_id") && j["instance_id"].is_string()
                                  ? "instance " + j["instance_id"].get<std::string>()
                                  : std::string("instance");
    reject_unknown(j,
                   {"instance_id", "repo", "pr", "language", "license_id", "base_commit", "problem_statement", "patch",
                    "test_patch", "install", "test_cmd", "fail_to_pass", "pass_to_pass", "origin", "validation", "tags",
                    "metadata", "interface_digest", "created_at", "merge_time"},
                   where);
    TaskInstance t;
    t.instance_id = field<std::string>(j, "instance_id", where);
    t.repo = field<std::string>(j, "repo", where);
    t.pr = field<int>(j, "pr", where);
    t.language = field<std::string>(j, "language", where);
    t.license_id = field<std::string>(j, "license_id", where);
    t.base_commit = field<std::string>(j, "base_commit", where);
    t.problem_statement = field<std::string>(j, "problem_statement", where);
    t.patch = field<std::string>(j, "patch", where);
    t.test_patch = field<std::string>(j, "test_patch", where);
    t.install = field<std::vector<std::string>>(j, "install", where);
    t.test_cmd = field<std::vector<std::string>>(j, "test_cmd", where);
    t.fail_to_pass = field<std::vector<std::string>>(j, "fail_to_pass", where);
    t.pass_to_pass = field<std::vector<std::string>>(j, "pass_to_pass", where);
    t.origin = field<std::string>(j, "origin", where);
    t.validation = j.contains("validation") ? field<std::string>(j, "validation", where) : "dual_pass";
    t.tags = j.contains("tags") ? field<std::vector<std::string>>(j, "tags", where) : std::vector<std::string>{};
    if (j.contains("metadata")) t.metadata = metadata_from_json(j["metadata"]);
    if (j.contains("interface_digest")) t.interface_digest = interface_digest_from_json(j["interface_digest"]);
    try {
        if (j.contains("created_at")) t.created_at = parse_rfc3339(field<std::string>(j, "created_at", where));
        if (j.contains("merge_time")) t.merge_time = parse_rfc3339(field<std::string>(j, "merge_time", where));
    } catch (const Error& e) {
        throw Error(ErrorKind::Schema, where + ": " + e.what());
    }
    return t;
}

} // namespace harvest
