// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/expand.hpp"
#include "harvest/error.hpp"
#include "harvest/util.hpp"

#include <boost/regex.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <map>

namespace harvest::expand {

using nlohmann::json;

std::vector<corpus::PullRequestRecord> eligible_prs(const std::string& repo, const std::set<int>& issue_linked,
                                                    const std::vector<corpus::PullRequestRecord>& prs,
                                                    bool has_verified_config) {
    std::vector<corpus::PullRequestRecord> out;
    if (!has_verified_config) return out;
    for (const auto& pr : prs) {
        if (pr.repo != repo || !pr.merged || issue_linked.count(pr.number)) continue;
        try {
            const auto split = patch::split_patch(patch::parse_unified_diff(pr.diff_text));
            if (split.test_patch.empty() || split.solution_patch.empty()) continue;
        } catch (const Error&) {
            continue;
        }
        out.push_back(pr);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.number < b.number; });
    return out;
}

namespace {

const std::vector<std::pair<std::string, std::string SyntheticStatement::*>>& sections() {
    static const std::vector<std::pair<std::string, std::string SyntheticStatement::*>> s{
        {"Title", &SyntheticStatement::title},
        {"Problem", &SyntheticStatement::problem},
        {"Root Cause", &SyntheticStatement::root_cause},
        {"Fix / Expected Behavior", &SyntheticStatement::fix_expected_behavior},
        {"Risk & Validation", &SyntheticStatement::risk_validation}};
    return s;
}

std::string canonical_section(const std::string& raw) {
    auto k = to_lower_ascii(raw);
    k.erase(std::remove_if(k.begin(), k.end(), [](char c) { return c == ' ' || c == '\t'; }), k.end());
    if (k == "title") return "Title";
    if (k == "problem") return "Problem";
    if (k == "rootcause") return "Root Cause";
    if (k == "fix/expectedbehavior" || k == "fix/expectedbehaviour") return "Fix / Expected Behavior";
    if (k == "risk&validation" || k == "riskandvalidation") return "Risk & Validation";
    return {};
}

std::set<std::string> word_tokens(const std::string& text, std::size_t min_length) {
    static const boost::regex id(R"([A-Za-z_][A-Za-z0-9_]*)");
    std::set<std::string> out;
    for (boost::sregex_iterator it(text.begin(), text.end(), id), end; it != end; ++it) {
        if (static_cast<std::size_t>(it->length()) >= min_length) out.insert(it->str());
    }
    return out;
}

std::vector<std::string> patch_paths(const std::string& solution_patch) {
    std::vector<std::string> out;
    if (solution_patch.empty()) return out;
    for (const auto& f : patch::parse_unified_diff(solution_patch)) {
        for (const auto* p : {&f.old_path, &f.new_path}) {
            if (!p->empty() && std::find(out.begin(), out.end(), *p) == out.end()) out.push_back(*p);
        }
    }
    return out;
}

} // namespace

std::string render(const SyntheticStatement& s) {
    return fmt::format("**Title** -- {}\n\n**Problem**\n{}\n\n**Root Cause**\n{}\n\n**Fix / Expected Behavior**\n{}\n\n"
                       "**Risk & Validation**\n{}\n",
                       s.title, s.problem, s.root_cause, s.fix_expected_behavior, s.risk_validation);
}

SyntheticStatement parse_statement(const std::string& text, int source_pr) {
    static const boost::regex header(
        R"(^\s*(?:#{1,6}\s*)?(?:[-*]\s+)?(?:\*\*|__)?\s*(Title|Problem|Root\s*Cause|Fix\s*/\s*Expected\s*Behaviou?r|Risk\s*(?:&|and)\s*Validation)\s*(?:\*\*|__)?\s*(?:--|:|-)?\s*(?:\*\*|__)?\s*(.*)$)",
        boost::regex::icase);
    std::map<std::string, std::vector<std::string>> found;
    std::string current;
    for (const auto& line : split_lines(text)) {
        boost::smatch m;
        if (boost::regex_match(line, m, header)) {
            const auto name = canonical_section(m[1].str());
            if (!name.empty() && !found.count(name)) {
                current = name;
                found[current];
                const auto rest = trim_ascii(m[2].str());
                if (!rest.empty()) found[current].push_back(rest);
                continue;
            }
        }
        if (!current.empty()) found[current].push_back(line);
    }
    SyntheticStatement s;
    s.source_pr = source_pr;
    std::vector<std::string> missing;
    for (const auto& [name, member] : sections()) {
        auto body = trim_ascii(join(found[name], "\n"));
        if (body.empty()) missing.push_back(name);
        s.*member = std::move(body);
    }
    if (!missing.empty()) {
        throw Error(ErrorKind::Parse, "statement lacks section(s): " + join(missing, ", "));
    }
    return s;
}

std::set<std::string> added_identifiers(const std::string& solution_patch, std::size_t min_length) {
    std::set<std::string> out;
    if (solution_patch.empty()) return out;
    for (const auto& line : patch::added_lines(patch::parse_unified_diff(solution_patch))) {
        auto t = word_tokens(line, min_length);
        out.insert(t.begin(), t.end());
    }
    return out;
}

LeakageReport leakage_check(const SyntheticStatement& statement, const std::string& solution_patch,
                            const LeakageOptions& options) {
    LeakageReport r;
    const auto text = render(statement);
    for (const auto& p : patch_paths(solution_patch)) {
        if (text.find(p) != std::string::npos) r.path_hits.push_back(p);
    }
    const auto ids = added_identifiers(solution_patch, options.min_token_length);
    const auto words = word_tokens(text, options.min_token_length);
    std::set_intersection(ids.begin(), ids.end(), words.begin(), words.end(), std::back_inserter(r.token_hits));
    r.token_count = ids.size();
    r.overlap = ids.empty() ? 0.0 : static_cast<double>(r.token_hits.size()) / static_cast<double>(ids.size());
    r.clean = r.path_hits.empty() && !(r.overlap > options.max_overlap);
    return r;
}

SyntheticStatement builtin_statement(const corpus::PullRequestRecord& pr, const patch::SplitPatch& split) {
    auto paths = patch_paths(split.solution_patch);
    std::vector<std::string> names = paths;
    for (const auto& p : paths) {
        const auto base = std::filesystem::path(p).filename().string();
        if (!base.empty()) names.push_back(base);
    }
    std::sort(names.begin(), names.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    const auto ids = added_identifiers(split.solution_patch, 1);
    const auto redact = [&](std::string text) {
        for (const auto& n : names) {
            for (auto pos = text.find(n); pos != std::string::npos; pos = text.find(n, pos)) {
                text.replace(pos, n.size(), "[redacted]");
                pos += 10;
            }
        }
        static const boost::regex id(R"([A-Za-z_][A-Za-z0-9_]*)");
        std::string out;
        auto last = text.cbegin();
        for (boost::sregex_iterator it(text.begin(), text.end(), id), end; it != end; ++it) {
            out.append(last, (*it)[0].first);
            const auto w = it->str();
            out += (w.size() >= 4 && ids.count(w) && w != "redacted") ? "[redacted]" : w;
            last = (*it)[0].second;
        }
        out.append(last, text.cend());
        return out;
    };

    // First three sentences of the PR body, flattened to one paragraph.
    std::string body = trim_ascii(pr.body);
    std::replace(body.begin(), body.end(), '\n', ' ');
    std::string problem;
    int sentences = 0;
    for (std::size_t i = 0; i < body.size() && sentences < 3; ++i) {
        problem += body[i];
        if ((body[i] == '.' || body[i] == '!' || body[i] == '?') && (i + 1 == body.size() || body[i + 1] == ' ')) {
            ++sentences;
        }
    }
    problem = trim_ascii(problem);

    SyntheticStatement s;
    s.source_pr = pr.number;
    s.title = trim_ascii(redact(pr.title));
    if (s.title.empty()) s.title = "Behavior change";
    s.problem = problem.empty() ? "The current behavior does not match what callers expect, as summarized in the title."
                                : redact(problem);
    s.root_cause = "The affected component does not handle this case correctly.";
    s.fix_expected_behavior =
        "- Behavior matches the description in the title.\n- Existing behavior outside this case is unchanged.";
    s.risk_validation = "- New or updated tests cover the described case.\n- Impact is limited to the affected component.";
    s.root_cause = redact(s.root_cause);
    s.fix_expected_behavior = redact(s.fix_expected_behavior);
    s.risk_validation = redact(s.risk_validation);
    return s;
}

GenerateResult generate_statement(const corpus::PullRequestRecord& pr, const patch::SplitPatch& split,
                                  const std::shared_ptr<seam::CompletionClient>& generator,
                                  const LeakageOptions& options) {
    GenerateResult r;
    SyntheticStatement s;
    if (!generator) {
        s = builtin_statement(pr, split);
    } else {
        const auto key = fmt::format("{}#{}", pr.repo, pr.number);
        json payload{{"repo", pr.repo}, {"title", pr.title}, {"body", pr.body}, {"patch", split.solution_patch}};
        bool ok = false;
        for (int round = 0; round < 2 && !ok; ++round) {
            seam::CompletionRequest req{"statement", round == 0 ? key : key + "#repair", payload};
            try {
                s = parse_statement(generator->complete(req), pr.number);
                ok = true;
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::Seam) {
                    r.skip_reason = "format";
                    r.detail = e.what();
                    return r;
                }
                r.detail = e.what();
                payload["problems"] = std::vector<std::string>{e.what()};
            }
        }
        if (!ok) {
            r.skip_reason = "format";
            return r;
        }
    }
    r.leakage = leakage_check(s, split.solution_patch, options);
    if (!r.leakage.clean) {
        r.skip_reason = "leakage";
        r.detail = r.leakage.path_hits.empty()
                       ? fmt::format("identifier overlap {:.3f} ({})", r.leakage.overlap, join(r.leakage.token_hits, ", "))
                       : "quotes " + join(r.leakage.path_hits, ", ");
        return r;
    }
    r.detail.clear();
    r.statement = std::move(s);
    return r;
}

json to_json(const LeakageReport& r) {
    return json{{"clean", r.clean},
                {"path_hits", r.path_hits},
                {"token_hits", r.token_hits},
                {"token_count", r.token_count},
                {"overlap", r.overlap}};
}

} // namespace harvest::expand
