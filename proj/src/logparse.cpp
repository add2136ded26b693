// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/logparse.hpp"

#include "harvest/error.hpp"
#include "pyre.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <boost/regex.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <sstream>

namespace harvest::logparse {

using nlohmann::json;

std::string_view to_string(TestStatus status) {
    switch (status) {
    case TestStatus::Passed: return "PASSED";
    case TestStatus::Failed: return "FAILED";
    case TestStatus::Skipped: return "SKIPPED";
    case TestStatus::Error: return "ERROR";
    }
    return "ERROR";
}

std::optional<TestStatus> status_from_string(std::string_view text) {
    if (text == "PASSED") return TestStatus::Passed;
    if (text == "FAILED") return TestStatus::Failed;
    if (text == "SKIPPED") return TestStatus::Skipped;
    if (text == "ERROR") return TestStatus::Error;
    return std::nullopt;
}

json to_json(const TestStatusMap& map) {
    json j = json::object();
    for (const auto& [name, status] : map) j[name] = to_string(status);
    return j;
}

TestStatusMap status_map_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Schema, "status map must be an object");
    TestStatusMap map;
    for (const auto& [name, value] : j.items()) {
        const auto status = value.is_string() ? status_from_string(value.get<std::string>()) : std::nullopt;
        if (!status) throw Error(ErrorKind::Schema, fmt::format("bad status for '{}'", name));
        map[name] = *status;
    }
    return map;
}

// ---------------------------------------------------------------------------
// Reference ports

TestStatusMap parse_gotest(std::string_view log) {
    static const pyre::Pattern pattern(R"(^--- (PASS|FAIL|SKIP): (.+) \((.+)\)$)");
    TestStatusMap out;
    std::size_t start = 0;
    while (true) {
        const auto nl = log.find('\n', start);
        const auto line = log.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (auto m = pattern.match(pyre::strip(line))) {
            const auto& status = *(*m)[1];
            auto& slot = out[*(*m)[2]];
            if (status == "PASS") slot = TestStatus::Passed;
            else if (status == "FAIL") slot = TestStatus::Failed;
            else slot = TestStatus::Skipped;
        }
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return out;
}

TestStatusMap parse_exunit(std::string_view log) {
    static const pyre::Pattern skipped(R"(^\*\s+test\s+(.*?)\s+\(skipped\)\s+\[L#\d+\]$)");
    static const pyre::Pattern passed_timed(R"(^\*\s+test\s+(.*?)\s+\([0-9]+(?:\.[0-9]+)?ms\)\s+\[L#\d+\]$)");
    static const pyre::Pattern passed_basic(R"(^\*\s+test\s+(.*?)\s+\[L#\d+\]$)");
    static const pyre::Pattern failure_header(R"(^\d+\)\s+test\s+(.*?)\s+\([^)]+\)$)");
    TestStatusMap out;
    for (const auto raw : pyre::splitlines(log)) {
        const auto line = pyre::strip(raw);
        if (line.empty()) continue;
        if (auto m = skipped.match(line)) {
            out[*(*m)[1]] = TestStatus::Skipped;
        } else if (auto f = failure_header.match(line)) {
            out[*(*f)[1]] = TestStatus::Failed;
        } else if (auto t = passed_timed.match(line)) {
            out.try_emplace(*(*t)[1], TestStatus::Passed);
        } else if (auto b = passed_basic.match(line)) {
            out.try_emplace(*(*b)[1], TestStatus::Passed);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JUnit XML

namespace {

namespace pt = boost::property_tree;

void collect_cases(const pt::ptree& node, TestStatusMap& out) {
    for (const auto& [tag, child] : node) {
        if (tag != "testcase") {
            if (tag != "<xmlattr>" && tag != "<xmlcomment>") collect_cases(child, out);
            continue;
        }
        const auto name = child.get<std::string>("<xmlattr>.name", "");
        const auto classname = child.get<std::string>("<xmlattr>.classname", "");
        if (name.empty()) continue;
        const auto key = classname.empty() ? name : classname + "::" + name;
        TestStatus status = TestStatus::Passed;
        if (child.count("failure") || child.count("error")) {
            status = TestStatus::Failed;
        } else if (child.count("skipped")) {
            status = TestStatus::Skipped;
        }
        out[key] = status;
    }
}

bool tag_at(std::string_view text, std::size_t pos, std::string_view tag) {
    if (text.compare(pos, tag.size(), tag) != 0) return false;
    const auto after = pos + tag.size();
    return after < text.size() && (text[after] == '>' || text[after] == '/' || std::isspace(static_cast<unsigned char>(text[after])));
}

// End offset (one past '>') of the element opened at `open`, or npos.
std::size_t element_end(std::string_view text, std::size_t open, std::string_view name) {
    const std::string opener = "<" + std::string(name);
    const std::string closer = "</" + std::string(name) + ">";
    int depth = 0;
    std::size_t pos = open;
    while (pos < text.size()) {
        const auto lt = text.find('<', pos);
        if (lt == std::string_view::npos) return std::string_view::npos;
        if (tag_at(text, lt, opener)) {
            const auto gt = text.find('>', lt);
            if (gt == std::string_view::npos) return std::string_view::npos;
            if (text[gt - 1] != '/') ++depth;
            else if (depth == 0) return gt + 1;
            pos = gt + 1;
        } else if (text.compare(lt, closer.size(), closer) == 0) {
            if (--depth == 0) return lt + closer.size();
            pos = lt + closer.size();
        } else {
            pos = lt + 1;
        }
    }
    return std::string_view::npos;
}

} // namespace

TestStatusMap parse_junit_xml(std::string_view xml) {
    pt::ptree tree;
    std::istringstream in{std::string(xml)};
    try {
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw Error(ErrorKind::Parse, fmt::format("malformed JUnit XML: {} (line {})", e.message(), e.line()));
    }
    if (tree.empty()) throw Error(ErrorKind::Parse, "malformed JUnit XML: no root element");
    TestStatusMap out;
    collect_cases(tree, out);
    return out;
}

TestStatusMap parse_embedded_junit(std::string_view log) {
    TestStatusMap out;
    std::size_t pos = 0;
    while (pos < log.size()) {
        const auto lt = log.find("<testsuite", pos);
        if (lt == std::string_view::npos) break;
        std::string_view name;
        if (tag_at(log, lt, "<testsuites")) name = "testsuites";
        else if (tag_at(log, lt, "<testsuite")) name = "testsuite";
        if (name.empty()) {
            pos = lt + 1;
            continue;
        }
        const auto end = element_end(log, lt, name);
        if (end == std::string_view::npos) break;
        try {
            for (auto& [k, v] : parse_junit_xml(log.substr(lt, end - lt))) out[k] = v;
        } catch (const Error&) {
            // a truncated or garbled report; keep scanning
        }
        pos = end;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rule DSL

namespace {

std::string_view mode_name(ParserMode m) {
    switch (m) {
    case ParserMode::Lines: return "lines";
    case ParserMode::JunitXml: return "junit_xml";
    case ParserMode::Builtin: return "builtin";
    }
    return "lines";
}

struct CompiledRule {
    const LineRule* rule;
    boost::regex re;
};

std::vector<CompiledRule> compile(const ParserSpec& spec) {
    std::vector<CompiledRule> out;
    for (const auto& r : spec.rules) {
        try {
            out.push_back({&r, boost::regex(r.pattern, boost::regex::perl)});
        } catch (const boost::regex_error& e) {
            throw Error(ErrorKind::Schema, fmt::format("parser '{}': bad pattern '{}': {}", spec.id, r.pattern, e.what()));
        }
    }
    return out;
}

std::string format_name(const std::string& fmt_str, const boost::smatch& m) {
    std::string out;
    for (std::size_t i = 0; i < fmt_str.size(); ++i) {
        if (fmt_str[i] == '$' && i + 1 < fmt_str.size() && std::isdigit(static_cast<unsigned char>(fmt_str[i + 1]))) {
            const auto g = static_cast<std::size_t>(fmt_str[i + 1] - '0');
            if (g < m.size() && m[g].matched) out += m[g].str();
            ++i;
        } else {
            out += fmt_str[i];
        }
    }
    return out;
}

std::vector<int> referenced_groups(const LineRule& r) {
    std::vector<int> groups;
    if (r.name_format.empty()) groups.push_back(r.name_group);
    for (std::size_t i = 0; i + 1 < r.name_format.size(); ++i) {
        if (r.name_format[i] == '$' && std::isdigit(static_cast<unsigned char>(r.name_format[i + 1]))) {
            groups.push_back(r.name_format[i + 1] - '0');
        }
    }
    if (!r.status) groups.push_back(r.status_group);
    return groups;
}

TestStatusMap apply_rules(const ParserSpec& spec, std::string_view log) {
    const auto compiled = compile(spec);
    TestStatusMap out;
    for (auto line : split_lines(log)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        for (const auto& c : compiled) {
            boost::smatch m;
            if (!boost::regex_search(line, m, c.re)) continue;
            const LineRule& r = *c.rule;
            std::optional<TestStatus> status = r.status;
            if (!status) {
                const auto it = r.status_map.find(m[r.status_group].str());
                if (it == r.status_map.end()) continue;
                status = it->second;
            }
            const auto name = r.name_format.empty() ? m[r.name_group].str() : format_name(r.name_format, m);
            if (name.empty()) continue;
            if (r.tentative) out.try_emplace(name, *status);
            else out[name] = *status;
            break;
        }
    }
    return out;
}

} // namespace

void validate(const ParserSpec& spec) {
    if (spec.id.empty()) throw Error(ErrorKind::Schema, "parser spec without id");
    switch (spec.mode) {
    case ParserMode::Builtin:
        if (spec.builtin != "gotest" && spec.builtin != "exunit") {
            throw Error(ErrorKind::Schema, fmt::format("parser '{}': unknown builtin '{}'", spec.id, spec.builtin));
        }
        return;
    case ParserMode::JunitXml: return;
    case ParserMode::Lines: break;
    }
    if (spec.rules.empty()) throw Error(ErrorKind::Schema, fmt::format("parser '{}' has no rules", spec.id));
    const auto compiled = compile(spec);
    for (const auto& c : compiled) {
        const auto marks = static_cast<int>(c.re.mark_count());
        for (const int g : referenced_groups(*c.rule)) {
            if (g < 0 || g > marks) {
                throw Error(ErrorKind::Schema,
                            fmt::format("parser '{}': pattern '{}' has no group {}", spec.id, c.rule->pattern, g));
            }
        }
        if (!c.rule->status && c.rule->status_map.empty()) {
            throw Error(ErrorKind::Schema, fmt::format("parser '{}': rule '{}' maps no status", spec.id, c.rule->pattern));
        }
    }
}

json to_json(const ParserSpec& spec) {
    json rules = json::array();
    for (const auto& r : spec.rules) {
        json jr{{"pattern", r.pattern}};
        if (r.name_format.empty()) jr["name_group"] = r.name_group;
        else jr["name_format"] = r.name_format;
        if (r.status) {
            jr["status"] = to_string(*r.status);
        } else {
            jr["status_group"] = r.status_group;
            json sm = json::object();
            for (const auto& [k, v] : r.status_map) sm[k] = to_string(v);
            jr["status_map"] = sm;
        }
        if (r.tentative) jr["tentative"] = true;
        rules.push_back(jr);
    }
    json j{{"id", spec.id}, {"mode", mode_name(spec.mode)},
           {"provenance", spec.provenance == Provenance::Builtin ? "builtin" : "bootstrapped"}};
    if (spec.mode == ParserMode::Builtin) j["builtin"] = spec.builtin;
    if (spec.mode == ParserMode::Lines) j["rules"] = rules;
    return j;
}

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view what) {
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw Error(ErrorKind::Schema, fmt::format("unknown key '{}' in {}", key, what));
        }
    }
}

TestStatus parse_status(const json& v) {
    const auto s = v.is_string() ? status_from_string(v.get<std::string>()) : std::nullopt;
    if (!s || *s == TestStatus::Error) throw Error(ErrorKind::Schema, fmt::format("bad rule status {}", v.dump()));
    return *s;
}

} // namespace

ParserSpec spec_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Schema, "parser spec must be an object");
    reject_unknown(j, {"id", "mode", "builtin", "rules", "provenance"}, "parser spec");
    ParserSpec spec;
    try {
        spec.id = j.at("id").get<std::string>();
        const auto mode = j.value("mode", std::string("lines"));
        if (mode == "lines") spec.mode = ParserMode::Lines;
        else if (mode == "junit_xml") spec.mode = ParserMode::JunitXml;
        else if (mode == "builtin") spec.mode = ParserMode::Builtin;
        else throw Error(ErrorKind::Schema, fmt::format("unknown parser mode '{}'", mode));
        spec.builtin = j.value("builtin", std::string());
        const auto prov = j.value("provenance", std::string("bootstrapped"));
        if (prov != "builtin" && prov != "bootstrapped") throw Error(ErrorKind::Schema, "bad provenance " + prov);
        spec.provenance = prov == "builtin" ? Provenance::Builtin : Provenance::Bootstrapped;
        const auto rules = j.value("rules", json::array());
        for (const auto& jr : rules) {
            reject_unknown(jr, {"pattern", "name_group", "name_format", "status", "status_group", "status_map", "tentative"},
                           "parser rule");
            LineRule r;
            r.pattern = jr.at("pattern").get<std::string>();
            r.name_group = jr.value("name_group", 1);
            r.name_format = jr.value("name_format", std::string());
            if (jr.contains("status")) r.status = parse_status(jr["status"]);
            r.status_group = jr.value("status_group", 0);
            const auto status_map = jr.value("status_map", json::object());
            for (const auto& [k, v] : status_map.items()) r.status_map[k] = parse_status(v);
            r.tentative = jr.value("tentative", false);
            spec.rules.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad parser spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

TestStatusMap apply_parser(const ParserSpec& spec, std::string_view log) {
    const auto clean = strip_ansi(log);
    switch (spec.mode) {
    case ParserMode::Builtin: return spec.builtin == "exunit" ? parse_exunit(clean) : parse_gotest(clean);
    case ParserMode::JunitXml: return parse_embedded_junit(clean);
    case ParserMode::Lines: return apply_rules(spec, clean);
    }
    return {};
}

TestStatusMap apply_parser(const ParserSpec& spec, const ExecutionTrace& trace) {
    return apply_parser(spec, trace.combined_output());
}

// ---------------------------------------------------------------------------
// Registry

namespace {

LineRule fixed(std::string pattern, TestStatus status, int name_group = 1) {
    LineRule r;
    r.pattern = std::move(pattern);
    r.name_group = name_group;
    r.status = status;
    return r;
}

LineRule mapped(std::string pattern, int name_group, int status_group, std::map<std::string, TestStatus> map) {
    LineRule r;
    r.pattern = std::move(pattern);
    r.name_group = name_group;
    r.status_group = status_group;
    r.status_map = std::move(map);
    return r;
}

std::vector<ParserSpec> make_registry() {
    using S = TestStatus;
    std::vector<ParserSpec> reg;
    reg.push_back({"gotest", ParserMode::Builtin, "gotest", {}, Provenance::Builtin});
    reg.push_back({"exunit", ParserMode::Builtin, "exunit", {}, Provenance::Builtin});
    reg.push_back({"junit_xml", ParserMode::JunitXml, "", {}, Provenance::Builtin});

    const std::map<std::string, S> pytest_words{{"PASSED", S::Passed}, {"XPASS", S::Passed},  {"FAILED", S::Failed},
                                                {"ERROR", S::Failed},  {"SKIPPED", S::Skipped}, {"XFAIL", S::Skipped}};
    reg.push_back({"pytest", ParserMode::Lines, "",
                   {mapped(R"(^(\S+::\S.*?) (PASSED|FAILED|SKIPPED|ERROR|XFAIL|XPASS)(?:\s+\[\s*\d+%\])?\s*$)", 1, 2, pytest_words),
                    mapped(R"(^(PASSED|FAILED|ERROR|XFAIL|XPASS) (\S+::\S+?)(?: - .*)?$)", 2, 1, pytest_words)},
                   Provenance::Builtin});

    const std::map<std::string, S> unittest_words{{"ok", S::Passed},
                                                  {"FAIL", S::Failed},
                                                  {"ERROR", S::Failed},
                                                  {"skipped", S::Skipped},
                                                  {"expected failure", S::Skipped},
                                                  {"unexpected success", S::Failed}};
    LineRule ut311 = mapped(R"(^(\w+) \(([\w.]+)\.\1\) \.\.\. (ok|FAIL|ERROR|skipped|expected failure|unexpected success)\b.*$)",
                            1, 3, unittest_words);
    ut311.name_format = "$2.$1";
    LineRule ut = mapped(R"(^(\w+) \(([\w.]+)\) \.\.\. (ok|FAIL|ERROR|skipped|expected failure|unexpected success)\b.*$)",
                         1, 3, unittest_words);
    ut.name_format = "$2.$1";
    reg.push_back({"unittest", ParserMode::Lines, "", {ut311, ut}, Provenance::Builtin});

    reg.push_back({"cargo", ParserMode::Lines, "",
                   {mapped(R"(^test (\S+) \.\.\. (ok|FAILED|ignored)\b.*$)", 1, 2,
                           {{"ok", S::Passed}, {"FAILED", S::Failed}, {"ignored", S::Skipped}})},
                   Provenance::Builtin});

    reg.push_back({"tap", ParserMode::Lines, "",
                   {fixed(R"(^ok \d+ (?:- )?(.+?) # [Ss][Kk][Ii][Pp]\b.*$)", S::Skipped),
                    fixed(R"(^not ok \d+ (?:- )?(.+?)(?: # .*)?$)", S::Failed),
                    fixed(R"(^ok \d+ (?:- )?(.+?)(?: # .*)?$)", S::Passed)},
                   Provenance::Builtin});

    reg.push_back({"gtest", ParserMode::Lines, "",
                   {fixed(R"(^\[\s+OK\s+\] (\S+) \(\d+ ms\)$)", S::Passed),
                    fixed(R"(^\[\s+FAILED\s+\] (\S+) \(\d+ ms\)$)", S::Failed),
                    fixed(R"(^\[\s+SKIPPED\s+\] (\S+) \(\d+ ms\)$)", S::Skipped)},
                   Provenance::Builtin});

    reg.push_back({"ctest", ParserMode::Lines, "",
                   {mapped(R"(^\s*\d+/\d+ Test\s+#\d+: (\S+) \.*\s*(Passed|\*\*\*Failed|\*\*\*Not Run|\*\*\*Skipped|\*\*\*Timeout|\*\*\*Exception)\b.*$)",
                           1, 2,
                           {{"Passed", S::Passed},
                            {"***Failed", S::Failed},
                            {"***Not Run", S::Failed},
                            {"***Timeout", S::Failed},
                            {"***Exception", S::Failed},
                            {"***Skipped", S::Skipped}})},
                   Provenance::Builtin});
    return reg;
}

} // namespace

const std::vector<ParserSpec>& builtin_parsers() {
    static const std::vector<ParserSpec> registry = make_registry();
    return registry;
}

const ParserSpec& builtin_parser(std::string_view id) {
    for (const auto& spec : builtin_parsers()) {
        if (spec.id == id) return spec;
    }
    throw Error(ErrorKind::InvalidArgument, fmt::format("no builtin parser '{}'", id));
}

// ---------------------------------------------------------------------------
// Bootstrap

namespace {

constexpr std::size_t kExcerptBytes = 16 * 1024;

std::vector<TraceCoverage> coverage_of(const ParserSpec& spec, const std::vector<const std::string*>& logs) {
    std::vector<TraceCoverage> cov;
    for (std::size_t i = 0; i < logs.size(); ++i) cov.push_back({i, apply_parser(spec, *logs[i]).size()});
    return cov;
}

bool covers_all(const std::vector<TraceCoverage>& cov) {
    return std::all_of(cov.begin(), cov.end(), [](const auto& c) { return c.names > 0; });
}

std::size_t covered_count(const std::vector<TraceCoverage>& cov) {
    return static_cast<std::size_t>(std::count_if(cov.begin(), cov.end(), [](const auto& c) { return c.names > 0; }));
}

std::string excerpt(const std::string& log) {
    if (log.size() <= kExcerptBytes) return log;
    return log.substr(0, kExcerptBytes / 2) + "\n...\n" + log.substr(log.size() - kExcerptBytes / 2);
}

} // namespace

BootstrapResult bootstrap_parser(const std::vector<std::string>& successful_logs,
                                 const std::vector<std::string>& remaining_logs, ParserGenerator* generator,
                                 int max_rounds) {
    if (successful_logs.empty()) throw Error(ErrorKind::Precondition, "bootstrap needs at least one successful trace");
    if (max_rounds < 1) throw Error(ErrorKind::InvalidArgument, "max_rounds must be >= 1");

    std::vector<const std::string*> all;
    for (const auto& l : successful_logs) all.push_back(&l);
    for (const auto& l : remaining_logs) all.push_back(&l);

    std::vector<std::size_t> pool(successful_logs.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;

    std::optional<BootstrapResult> best;
    const auto consider = [&](const ParserSpec& spec, int round) {
        auto cov = coverage_of(spec, all);
        const bool done = covers_all(cov);
        if (!best || covered_count(cov) > covered_count(best->coverage)) best = BootstrapResult{spec, round, cov};
        return done;
    };

    for (int round = 1; round <= max_rounds; ++round) {
        // registry scoring: the builtin extracting the most names from the pool
        const ParserSpec* top = nullptr;
        std::size_t top_score = 0;
        for (const auto& spec : builtin_parsers()) {
            std::size_t score = 0;
            for (const auto i : pool) score += apply_parser(spec, *all[i]).size();
            if (score > top_score) {
                top = &spec;
                top_score = score;
            }
        }
        if (top && consider(*top, round)) return *best;

        if (generator) {
            ParserRequest req;
            req.round = round;
            for (const auto i : pool) req.sample_logs.push_back(excerpt(*all[i]));
            if (best) {
                req.previous = best->spec;
                for (const auto& c : best->coverage)
                    if (c.names == 0) req.uncovered.push_back(c.trace_index);
            }
            try {
                auto spec = generator->propose(req);
                spec.provenance = Provenance::Bootstrapped;
                validate(spec);
                if (consider(spec, round)) return *best;
            } catch (const Error&) {
                // an invalid proposal burns the round
            }
        }

        // widen the sample with the first trace the best candidate misses
        if (best) {
            for (const auto& c : best->coverage) {
                if (c.names == 0 && std::find(pool.begin(), pool.end(), c.trace_index) == pool.end()) {
                    pool.push_back(c.trace_index);
                    break;
                }
            }
        }
    }

    std::string detail;
    const auto cov = best ? best->coverage : std::vector<TraceCoverage>{};
    for (std::size_t i = 0; i < all.size(); ++i) {
        detail += fmt::format("{}trace {}: {} names", i ? "; " : "", i, i < cov.size() ? cov[i].names : 0);
    }
    throw BootstrapError(fmt::format("no parser covers all traces after {} rounds (best '{}': {})", max_rounds,
                            best ? best->spec.id : "none", detail),
                         cov);
}

} // namespace harvest::logparse
