// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/enrich.hpp"
#include "harvest/error.hpp"

#include <boost/regex.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <set>

namespace harvest::enrich {

using nlohmann::json;

namespace {

std::vector<std::string> added(const std::string& diff_text) {
    if (diff_text.empty()) return {};
    return patch::added_lines(patch::parse_unified_diff(diff_text));
}

std::size_t word_count(const std::string& text) {
    std::size_t n = 0;
    bool in = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in) ++n;
        in = !space;
    }
    return n;
}

bool has(const std::string& haystack, const char* needle) { return haystack.find(needle) != std::string::npos; }

} // namespace

std::string primary_code(const std::map<std::string, bool>& detected) {
    for (std::size_t i = 1; i < diagnostic_codes().size(); ++i) {
        const auto it = detected.find(diagnostic_codes()[i]);
        if (it != detected.end() && it->second) return it->first;
    }
    return "A";
}

std::vector<std::string> find_urls(const std::string& text) {
    static const boost::regex re(R"(https?://[^\s<>"'`)\]]+)");
    std::vector<std::string> out;
    for (boost::sregex_iterator it(text.begin(), text.end(), re), end; it != end; ++it) {
        auto url = it->str();
        while (!url.empty() && std::string(".,;:!?").find(url.back()) != std::string::npos) url.pop_back();
        if (std::find(out.begin(), out.end(), url) == out.end()) out.push_back(url);
    }
    return out;
}

bool detect_inline_tests(const patch::SplitPatch& split) {
    static const boost::regex decl(
        R"((?:\b(?:fn|def|func|function|void)\s+(?:test_?\w*|Test\w*)\s*\()|#\[test\]|#\[cfg\(test\)\]|@Test\b|@pytest\b|^\s*(?:describe|it|test)\s*\(\s*['"`]|\bmod\s+tests\b|\bdefmodule\s+\w*Test\b)");
    static const boost::regex assertion(
        R"(\b(?:assert_eq!|assert_ne!|assert!|assertEqual|assertTrue|assertFalse|assertRaises|assertThat|assertEquals|t\.(?:Errorf|Fatalf|Fatal|Error)\s*\(|expect\s*\([^)]*\)\s*\.\s*to))");
    for (const auto& line : added(split.solution_patch)) {
        if (boost::regex_search(line, decl) || boost::regex_search(line, assertion)) return true;
    }
    return false;
}

std::string difficulty_band(const patch::SplitPatch& split) {
    if (split.solution_patch.empty()) return "easy";
    const auto files = patch::parse_unified_diff(split.solution_patch);
    std::size_t changed = 0;
    for (const auto& f : files) {
        for (const auto& h : f.hunks) {
            for (const auto& l : h.lines) {
                if (!l.empty() && (l[0] == '+' || l[0] == '-')) ++changed;
            }
        }
    }
    if (changed <= 20 && files.size() <= 2) return "easy";
    if (changed <= 100 && files.size() <= 5) return "medium";
    return "hard";
}

json BuiltinAnnotator::propose(const TaskInstance& t, const std::vector<std::string>&) {
    const auto split = patch::split_patch(patch::parse_unified_diff(t.patch + t.test_patch));
    DiagnosticMetadata m;
    for (std::size_t i = 1; i < diagnostic_codes().size(); ++i) m.detected_issues[diagnostic_codes()[i]] = false;
    std::vector<std::string> why;

    m.external_urls = find_urls(t.problem_statement);
    if (!m.external_urls.empty()) {
        m.detected_issues["B3"] = true;
        why.push_back(fmt::format("problem statement links {} external URL(s)", m.external_urls.size()));
    }
    if (detect_inline_tests(split)) {
        m.detected_issues["B7"] = true;
        why.push_back("solution patch adds test constructs");
    }
    const auto words = word_count(t.problem_statement);
    m.intent_completeness = words < 8 ? "insufficient" : words < 20 ? "partial" : "complete";
    if (m.intent_completeness == "insufficient") {
        m.detected_issues["B4"] = true;
        why.push_back("problem statement is very short");
    }
    m.code = primary_code(m.detected_issues);

    const auto text = to_lower_ascii(t.problem_statement);
    std::set<std::string> cats;
    const bool docs_only = !split.solution_files.empty() &&
                           std::all_of(split.solution_files.begin(), split.solution_files.end(), [](const std::string& p) {
                               const auto l = to_lower_ascii(p);
                               return l.size() > 3 && (l.rfind(".md") == l.size() - 3 || l.rfind(".rst") == l.size() - 4 ||
                                                       l.rfind(".txt") == l.size() - 4);
                           });
    if (docs_only) cats.insert("documentation_enh");
    if (has(text, "crash") || has(text, "panic") || has(text, "exception") || has(text, "error")) cats.insert("major_bug");
    if (has(text, "regression")) cats.insert("regression_bug");
    if (has(text, "slow") || has(text, "performance")) cats.insert("performance_bug");
    if (has(text, "security") || has(text, "vulnerab") || has(text, "injection")) cats.insert("security_bug");
    if (has(text, "empty") || has(text, "edge case") || has(text, "boundary") || has(text, "corner case")) {
        cats.insert("edge_case_bug");
    }
    if (has(text, "add ") || has(text, "support for") || has(text, "feature") || has(text, "implement")) {
        cats.insert("core_feat");
    }
    if (cats.empty()) cats.insert("minor_bug");
    for (const auto& c : pr_category_names()) {
        if (cats.count(c)) m.pr_categories.push_back(c);
    }

    m.difficulty = difficulty_band(split);
    m.confidence = 0.5;
    why.push_back("difficulty " + m.difficulty + " from patch size");
    m.reasoning = "Rule-based annotation: " + join(why, "; ") + ".";
    return to_json(m);
}

CompletionAnnotator::CompletionAnnotator(std::shared_ptr<seam::CompletionClient> client) : client_(std::move(client)) {
    if (!client_) throw Error(ErrorKind::InvalidArgument, "CompletionAnnotator needs a client");
}

json CompletionAnnotator::propose(const TaskInstance& t, const std::vector<std::string>& problems) {
    seam::CompletionRequest req;
    req.kind = "annotate";
    req.key = problems.empty() ? t.instance_id : t.instance_id + "#repair";
    req.payload = {{"repo", t.repo},
                   {"problem_statement", t.problem_statement},
                   {"patch", t.patch},
                   {"test_patch", t.test_patch},
                   {"problems", problems}};
    return seam::extract_json_object(client_->complete(req));
}

AnnotateResult annotate(const TaskInstance& t, Annotator& annotator) {
    if (t.problem_statement.empty() || t.patch.empty() || t.test_patch.empty()) {
        throw Error(ErrorKind::Precondition, "annotate: " + t.instance_id + " needs problem_statement, patch and test_patch");
    }
    AnnotateResult r;
    std::vector<std::string> problems;
    for (int round = 0; round < 2; ++round) {
        json raw;
        try {
            raw = annotator.propose(t, problems);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Seam) throw;
            r.failed = true;
            r.note = e.what();
            return r;
        }
        try {
            r.metadata = metadata_from_json(raw);
            return r;
        } catch (const Error& e) {
            problems = {e.what()};
        }
    }
    r.failed = true;
    r.note = "invalid metadata after repair: " + problems.front();
    return r;
}

// --- interfaces ---------------------------------------------------------------------

namespace {

struct Declaration {
    std::string name;
    std::string line;
    bool method = false;
};

const std::set<std::string>& keywords() {
    static const std::set<std::string> k{"if", "for", "while", "switch", "catch", "return", "function", "new",
                                         "else", "do", "try", "typeof", "await", "super", "constructor"};
    return k;
}

std::vector<Declaration> declarations(const std::vector<std::string>& lines) {
    static const boost::regex py(R"(^(\s*)(?:async\s+)?def\s+([A-Za-z_]\w*[?!]?)\s*[\(\s])");
    static const boost::regex rs(R"(\bfn\s+([A-Za-z_]\w*)\s*[<\(])");
    static const boost::regex go(R"(^\s*func\s+(\([^)]*\)\s*)?([A-Za-z_]\w*)\s*[\[\(])");
    static const boost::regex jsfn(R"(\bfunction\s*\*?\s*([A-Za-z_$][\w$]*)\s*\()");
    static const boost::regex jsvar(
        R"(\b(?:const|let|var)\s+([A-Za-z_$][\w$]*)\s*=\s*(?:async\s*)?(?:function\b|\([^)]*\)\s*=>|[A-Za-z_$][\w$]*\s*=>))");
    static const boost::regex jsmethod(R"(^\s*(?:static\s+)?(?:async\s+)?([A-Za-z_$][\w$]*)\s*\([^)]*\)\s*\{)");
    static const boost::regex java(
        R"(^\s*(?:(?:public|protected|private|static|final|synchronized|abstract|override|open|internal)\s+)+[\w<>\[\],.? ]*?\b([A-Za-z_]\w*)\s*\()");
    static const boost::regex self_param(R"(\(\s*(?:&\s*)?(?:mut\s+)?(?:self|this)\b)");

    std::vector<Declaration> out;
    for (const auto& line : lines) {
        boost::smatch m;
        Declaration d;
        d.line = trim_ascii(line);
        if (boost::regex_search(line, m, py)) {
            d.name = m[2].str();
            d.method = !m[1].str().empty() || boost::regex_search(line, self_param);
        } else if (boost::regex_search(line, m, rs)) {
            d.name = m[1].str();
            d.method = boost::regex_search(line, self_param);
        } else if (boost::regex_search(line, m, go)) {
            d.name = m[2].str();
            d.method = m[1].matched;
        } else if (boost::regex_search(line, m, jsfn) || boost::regex_search(line, m, jsvar)) {
            d.name = m[1].str();
        } else if (boost::regex_search(line, m, java)) {
            d.name = m[1].str();
            d.method = true;
        } else if (boost::regex_search(line, m, jsmethod)) {
            d.name = m[1].str();
            d.method = true;
        } else {
            continue;
        }
        if (keywords().count(d.name)) continue;
        out.push_back(std::move(d));
    }
    return out;
}

std::set<std::string> identifiers(const std::vector<std::string>& lines) {
    static const boost::regex id(R"([A-Za-z_$][\w$]*[?!]?)");
    std::set<std::string> out;
    for (const auto& l : lines) {
        for (boost::sregex_iterator it(l.begin(), l.end(), id), end; it != end; ++it) {
            auto s = it->str();
            out.insert(s);
            if (s.back() == '?' || s.back() == '!') out.insert(s.substr(0, s.size() - 1));
        }
    }
    return out;
}

std::string symbol_of(const std::string& signature) {
    auto head = signature.substr(0, signature.find('('));
    head = trim_ascii(head);
    for (const char* sep : {"::", ".", "#"}) {
        const auto p = head.rfind(sep);
        if (p != std::string::npos) head = head.substr(p + std::string(sep).size());
    }
    const auto sp = head.find_last_of(" \t");
    if (sp != std::string::npos) head = head.substr(sp + 1);
    return head;
}

bool test_named(const std::string& name) {
    return name.rfind("test", 0) == 0 || name.rfind("Test", 0) == 0;
}

std::string between(const std::string& s, char open, char close) {
    const auto a = s.find(open);
    if (a == std::string::npos) return {};
    int depth = 0;
    for (std::size_t i = a; i < s.size(); ++i) {
        if (s[i] == open) ++depth;
        if (s[i] == close && --depth == 0) return s.substr(a + 1, i - a - 1);
    }
    return s.substr(a + 1);
}

} // namespace

std::vector<std::string> declared_symbols(const std::string& solution_patch) {
    std::vector<std::string> out;
    for (const auto& d : declarations(added(solution_patch))) {
        if (std::find(out.begin(), out.end(), d.name) == out.end()) out.push_back(d.name);
    }
    return out;
}

InterfaceDigest parse_interface_answer(const std::string& text) {
    std::string body = text;
    const auto open = text.find("<ANSWER>");
    if (open != std::string::npos) {
        const auto close = text.find("</ANSWER>", open);
        body = text.substr(open + 8, close == std::string::npos ? std::string::npos : close - open - 8);
    }
    body = trim_ascii(body);
    InterfaceDigest d;
    if (body == kNoInterfacesSentinel) return d;

    static const boost::regex key(R"(\b(Method|Function|Location|Inputs|Outputs|Description):)");
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> marks;  // key, [value start, key start]
    for (boost::sregex_iterator it(body.begin(), body.end(), key), end; it != end; ++it) {
        const auto start = static_cast<std::size_t>(it->position(std::size_t{0}));
        marks.push_back({(*it)[1].str(), {start + static_cast<std::size_t>(it->length(std::size_t{0})), start}});
    }
    for (std::size_t i = 0; i < marks.size(); ++i) {
        const auto from = marks[i].second.first;
        const auto to = i + 1 < marks.size() ? marks[i + 1].second.second : body.size();
        auto value = trim_ascii(body.substr(from, to - from));
        const auto& k = marks[i].first;
        if (k == "Method" || k == "Function") {
            if (value.size() >= 2 && value.front() == '<' && value.back() == '>') value = value.substr(1, value.size() - 2);
            InterfaceEntry e;
            e.kind = k == "Method" ? "method" : "function";
            e.signature = value;
            d.entries.push_back(std::move(e));
        } else if (!d.entries.empty()) {
            auto& e = d.entries.back();
            if (k == "Inputs") e.inputs = value;
            if (k == "Outputs") e.outputs = value;
            if (k == "Description") e.description = value;
        }
    }
    if (d.entries.empty()) throw Error(ErrorKind::Seam, "interface answer has no entries and no sentinel");
    d.empty_sentinel = false;
    return d;
}

std::string render_interface_answer(const InterfaceDigest& d) {
    if (d.entries.empty()) return fmt::format("<ANSWER>{}</ANSWER>", kNoInterfacesSentinel);
    std::vector<std::string> blocks;
    for (const auto& e : d.entries) {
        blocks.push_back(fmt::format("{}: {}\nLocation:\nInputs: {}\nOutputs: {}\nDescription: {}",
                                     e.kind == "method" ? "Method" : "Function", e.signature, e.inputs, e.outputs,
                                     e.description));
    }
    return "<ANSWER>" + join(blocks, "\n\n") + "</ANSWER>";
}

InterfaceDigest extract_interfaces(const patch::SplitPatch& split,
                                   const std::shared_ptr<seam::CompletionClient>& generator, const std::string& key) {
    InterfaceDigest d;
    std::vector<Declaration> decls;
    std::set<std::string> used;
    try {
        decls = declarations(added(split.solution_patch));
        used = identifiers(added(split.test_patch));
    } catch (const Error& e) {
        d.note = std::string("unreadable patch: ") + e.what();
        return d;
    }
    std::set<std::string> declared;
    for (const auto& x : decls) declared.insert(x.name);
    const auto eligible = [&](const std::string& name) {
        return !name.empty() && name[0] != '_' && !test_named(name) && declared.count(name) && used.count(name);
    };

    if (generator) {
        InterfaceDigest proposed;
        try {
            seam::CompletionRequest req{"interfaces", key,
                                        {{"patch", split.solution_patch}, {"test_patch", split.test_patch}}};
            proposed = parse_interface_answer(generator->complete(req));
        } catch (const Error& e) {
            d.note = std::string("interface generator failed: ") + e.what();
            return d;
        }
        std::set<std::string> seen;
        for (auto& e : proposed.entries) {
            const auto name = symbol_of(e.signature);
            if (eligible(name) && seen.insert(e.signature).second) d.entries.push_back(std::move(e));
        }
    } else {
        std::set<std::string> seen;
        for (const auto& x : decls) {
            if (!eligible(x.name) || !seen.insert(x.name).second) continue;
            InterfaceEntry e;
            e.kind = x.method ? "method" : "function";
            auto sig = x.line;
            while (!sig.empty() && (sig.back() == '{' || sig.back() == ':' || sig.back() == ' ')) sig.pop_back();
            e.signature = sig;
            e.inputs = trim_ascii(between(sig, '(', ')'));
            const auto arrow = sig.find("->");
            if (arrow != std::string::npos) e.outputs = trim_ascii(sig.substr(arrow + 2));
            e.description = "Added or changed by the solution and called from the tests.";
            d.entries.push_back(std::move(e));
        }
    }
    d.empty_sentinel = d.entries.empty();
    return d;
}

// --- selection ------------------------------------------------------------------------

Query parse_query(const std::vector<std::string>& terms) {
    static const std::set<std::string> fields{"code", "category", "difficulty", "language", "origin", "repo", "f2p"};
    static const boost::regex re(R"(^\s*([a-z_0-9]+)\s*(>=|<=|=)\s*(.*?)\s*$)");
    Query q;
    for (const auto& t : terms) {
        boost::smatch m;
        if (!boost::regex_match(t, m, re)) throw Error(ErrorKind::InvalidArgument, "malformed query term '" + t + "'");
        Query::Term term{m[1].str(), m[2].str(), m[3].str()};
        if (!fields.count(term.field)) {
            throw Error(ErrorKind::InvalidArgument,
                        "unknown query field '" + term.field +
                            "' (code, category, difficulty, language, origin, repo, f2p)");
        }
        if (term.field == "f2p") {
            if (term.value.empty() || !std::all_of(term.value.begin(), term.value.end(), ::isdigit)) {
                throw Error(ErrorKind::InvalidArgument, "f2p bound must be a non-negative integer: '" + t + "'");
            }
        } else if (term.op != "=") {
            throw Error(ErrorKind::InvalidArgument, "field '" + term.field + "' only supports '='");
        }
        if (term.field == "code" && std::find(diagnostic_codes().begin(), diagnostic_codes().end(), term.value) ==
                                        diagnostic_codes().end()) {
            throw Error(ErrorKind::InvalidArgument, "unknown code '" + term.value + "'");
        }
        q.terms.push_back(std::move(term));
    }
    return q;
}

namespace {

bool matches(const TaskInstance& t, const Query::Term& term) {
    const auto& f = term.field;
    if (f == "f2p") {
        const auto n = static_cast<long long>(t.fail_to_pass.size());
        const auto v = std::stoll(term.value);
        return term.op == "=" ? n == v : term.op == ">=" ? n >= v : n <= v;
    }
    if (f == "language") return to_lower_ascii(t.language) == to_lower_ascii(term.value);
    if (f == "origin") return t.origin == term.value;
    if (f == "repo") return t.repo == term.value;
    if (!t.metadata) return false;
    if (f == "code") return t.metadata->code == term.value;
    if (f == "difficulty") return t.metadata->difficulty == term.value;
    if (f == "category") {
        const auto& c = t.metadata->pr_categories;
        return std::find(c.begin(), c.end(), term.value) != c.end();
    }
    return false;
}

} // namespace

std::vector<TaskInstance> select_subset(const std::vector<TaskInstance>& dataset, const Query& query) {
    std::vector<TaskInstance> out;
    for (const auto& t : dataset) {
        if (std::all_of(query.terms.begin(), query.terms.end(), [&](const Query::Term& term) { return matches(t, term); })) {
            out.push_back(t);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const TaskInstance& a, const TaskInstance& b) { return a.instance_id < b.instance_id; });
    return out;
}

} // namespace harvest::enrich
