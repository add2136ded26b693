// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/corpus.hpp"

#include "harvest/error.hpp"
#include "harvest/patch.hpp"

#include <boost/regex.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <sstream>

namespace harvest::corpus {

using nlohmann::json;

void FilterPolicy::check() const {
    if (high_resource_min_stars < 0 || high_resource_min_closed_issues < 0 || long_tail_min_stars < 0 ||
        long_tail_min_closed_issues < 0) {
        throw Error(ErrorKind::InvalidArgument, "filter thresholds must be >= 0");
    }
    if (permissive_licenses.empty()) throw Error(ErrorKind::InvalidArgument, "permissive_licenses must not be empty");
}

json to_json(const FilterPolicy& p) {
    return json{{"high_resource_min_stars", p.high_resource_min_stars},
                {"high_resource_min_closed_issues", p.high_resource_min_closed_issues},
                {"long_tail_min_stars", p.long_tail_min_stars},
                {"long_tail_min_closed_issues", p.long_tail_min_closed_issues},
                {"permissive_licenses", p.permissive_licenses},
                {"high_resource_languages", p.high_resource_languages},
                {"long_tail_languages", p.long_tail_languages}};
}

FilterPolicy policy_from_json(const json& j) {
    FilterPolicy p;
    for (const auto& [key, value] : j.items()) {
        if (key == "high_resource_min_stars") p.high_resource_min_stars = value.get<std::int64_t>();
        else if (key == "high_resource_min_closed_issues") p.high_resource_min_closed_issues = value.get<std::int64_t>();
        else if (key == "long_tail_min_stars") p.long_tail_min_stars = value.get<std::int64_t>();
        else if (key == "long_tail_min_closed_issues") p.long_tail_min_closed_issues = value.get<std::int64_t>();
        else if (key == "permissive_licenses") p.permissive_licenses = value.get<std::set<std::string>>();
        else if (key == "high_resource_languages") p.high_resource_languages = value.get<std::set<std::string>>();
        else if (key == "long_tail_languages") p.long_tail_languages = value.get<std::set<std::string>>();
        else throw Error(ErrorKind::Schema, fmt::format("unknown filter policy key '{}'", key));
    }
    p.check();
    return p;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

std::optional<Timestamp> optional_time(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return parse_rfc3339(j[key].get<std::string>());
}

std::string require_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw Error(ErrorKind::Schema, fmt::format("missing string '{}'", key));
    return j[key].get<std::string>();
}

std::int64_t require_count(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer()) throw Error(ErrorKind::Schema, fmt::format("missing integer '{}'", key));
    const auto v = j[key].get<std::int64_t>();
    if (v < 0) throw Error(ErrorKind::Schema, fmt::format("'{}' must be >= 0", key));
    return v;
}

int require_number(const json& j) {
    const auto n = require_count(j, "number");
    if (n < 1 || n > 1'000'000'000) throw Error(ErrorKind::Schema, "'number' must be >= 1");
    return static_cast<int>(n);
}

void check_repo_key(const std::string& name) {
    const auto slash = name.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == name.size() || name.find('/', slash + 1) != std::string::npos) {
        throw Error(ErrorKind::Schema, fmt::format("repo key '{}' is not owner/name", name));
    }
}

RepoRecord parse_repo(const json& j) {
    RepoRecord r;
    r.full_name = require_string(j, "full_name");
    check_repo_key(r.full_name);
    r.primary_language = require_string(j, "primary_language");
    r.stars = require_count(j, "stars");
    r.closed_issue_count = require_count(j, "closed_issue_count");
    r.license_id = j.value("license_id", std::string());
    if (j.contains("is_long_tail_language")) {
        r.is_long_tail_language = j["is_long_tail_language"].get<bool>();
    } else {
        r.is_long_tail_language = language_tier(r.primary_language, FilterPolicy{}) != LanguageTier::HighResource;
    }
    return r;
}

IssueRecord parse_issue(const json& j) {
    IssueRecord r;
    r.repo = require_string(j, "repo");
    check_repo_key(r.repo);
    r.number = require_number(j);
    r.title = j.value("title", std::string());
    r.body = j.value("body", std::string());
    const auto state = require_string(j, "state");
    if (state == "resolved" || state == "closed") r.state = IssueState::Resolved;
    else if (state == "open") r.state = IssueState::Open;
    else throw Error(ErrorKind::Schema, fmt::format("unknown issue state '{}'", state));
    r.created_at = optional_time(j, "created_at");
    return r;
}

PullRequestRecord parse_pr(const json& j) {
    PullRequestRecord r;
    r.repo = require_string(j, "repo");
    check_repo_key(r.repo);
    r.number = require_number(j);
    r.title = j.value("title", std::string());
    r.body = j.value("body", std::string());
    r.merged = j.value("merged", false);
    r.merge_time = optional_time(j, "merge_time");
    if (r.merged && !r.merge_time) throw Error(ErrorKind::Schema, "merged pull request without merge_time");
    r.base_commit = require_string(j, "base_commit");
    r.diff_text = j.value("diff_text", std::string());
    patch::parse_unified_diff(r.diff_text);  // rejects unparseable diffs at the door
    return r;
}

} // namespace

Corpus ingest_events(std::istream& source) {
    Corpus c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (trim_ascii(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            const auto kind = require_string(j, "kind");
            if (kind == "repo") {
                auto r = parse_repo(j);
                c.repos[r.full_name] = std::move(r);
            } else if (kind == "issue") {
                auto r = parse_issue(j);
                c.issues[{r.repo, r.number}] = std::move(r);
            } else if (kind == "pull_request") {
                auto r = parse_pr(j);
                c.prs[{r.repo, r.number}] = std::move(r);
            } else {
                throw Error(ErrorKind::Schema, fmt::format("unknown kind '{}'", kind));
            }
        } catch (const json::exception& e) {
            c.rejections.push_back({line_no, std::string("malformed record: ") + e.what()});
        } catch (const Error& e) {
            c.rejections.push_back({line_no, e.what()});
        }
    }
    return c;
}

Corpus ingest_events_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    return ingest_events(in);
}

IssueIndex issue_index(const Corpus& corpus, const std::string& repo) {
    IssueIndex idx;
    for (auto it = corpus.issues.lower_bound({repo, 0}); it != corpus.issues.end() && it->first.first == repo; ++it) {
        idx[it->first.second] = &it->second;
    }
    return idx;
}

std::set<int> link_issue_to_pr(const PullRequestRecord& pr, const IssueIndex& issues) {
    static const boost::regex linkage(R"(\b(?:fix(?:es|ed)?|close[sd]?|resolve[sd]?)(?::\s*|\s+)#(\d{1,9})(?!\w))",
                                      boost::regex::perl | boost::regex::icase);
    std::set<int> out;
    for (const std::string* text : {&pr.title, &pr.body}) {
        for (boost::sregex_iterator it(text->begin(), text->end(), linkage), end; it != end; ++it) {
            const int n = std::stoi((*it)[1].str());
            if (issues.count(n)) out.insert(n);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Filters

LanguageTier language_tier(const std::string& language, const FilterPolicy& policy) {
    const auto lower = to_lower_ascii(language);
    const auto in = [&](const std::set<std::string>& s) {
        return std::any_of(s.begin(), s.end(), [&](const std::string& x) { return to_lower_ascii(x) == lower; });
    };
    if (in(policy.high_resource_languages)) return LanguageTier::HighResource;
    if (in(policy.long_tail_languages)) return LanguageTier::LongTail;
    return LanguageTier::Unknown;
}

Decision filter_repo(const RepoRecord& repo, const FilterPolicy& policy) {
    Decision d;
    const auto tier = language_tier(repo.primary_language, policy);
    if (tier == LanguageTier::Unknown) d.notes.push_back("unknown_language");
    const bool high = tier == LanguageTier::HighResource;
    const auto min_stars = high ? policy.high_resource_min_stars : policy.long_tail_min_stars;
    const auto min_closed = high ? policy.high_resource_min_closed_issues : policy.long_tail_min_closed_issues;
    if (repo.stars < min_stars) {
        d.keep = false;
        d.reason = "low_stars";
    } else if (repo.closed_issue_count < min_closed) {
        d.keep = false;
        d.reason = "low_closed_issues";
    }
    return d;
}

RepoFilterResult filter_repos(const std::vector<RepoRecord>& repos, const FilterPolicy& policy) {
    policy.check();
    RepoFilterResult out;
    for (const auto& r : repos) {
        auto d = filter_repo(r, policy);
        if (d.keep) out.kept.insert(r.full_name);
        out.decisions[r.full_name] = std::move(d);
    }
    return out;
}

Decision filter_instance(const CandidateInstance& candidate, const RepoRecord& repo, const PullRequestRecord& pr,
                         bool issue_resolved, const FilterPolicy& policy) {
    Decision d;
    d.keep = false;
    if (!policy.permissive_licenses.count(repo.license_id)) {
        d.reason = "license";
    } else if (!issue_resolved) {
        d.reason = "issue_not_resolved";
    } else if (!pr.merged) {
        d.reason = "pr_not_merged";
    } else if (patch::split_patch(patch::parse_unified_diff(candidate.diff_text)).test_patch.empty()) {
        d.reason = "no_tests";
    } else {
        d.keep = true;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Funnel

metrics::FunnelReport funnel_counts(const std::vector<FunnelStageInput>& stages) {
    metrics::FunnelReport report;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        if (i > 0) {
            const auto& prev = stages[i - 1].kept;
            for (const auto& key : s.kept) {
                if (!prev.count(key)) {
                    throw Error(ErrorKind::Pipeline,
                                fmt::format("funnel stage '{}' keeps {}#{} which stage '{}' dropped", s.name, key.first,
                                            key.second, stages[i - 1].name));
                }
            }
        }
        std::set<std::string> repos;
        for (const auto& key : s.kept) repos.insert(key.first);
        report.stages.push_back({s.name, s.kept.size(), repos.size()});
    }
    return report;
}

MineResult mine(const Corpus& corpus, const FilterPolicy& policy) {
    policy.check();
    MineResult out;
    FunnelStageInput all{stage::kPrs, {}}, with_tests{stage::kWithTests, {}}, linked{stage::kLinked, {}},
        instance{stage::kInstance, {}}, repo_stage{stage::kRepo, {}};

    std::vector<RepoRecord> repo_list;
    for (const auto& [_, r] : corpus.repos) repo_list.push_back(r);
    const auto repo_result = filter_repos(repo_list, policy);
    out.repo_decisions = repo_result.decisions;

    const auto reject = [&](const PrKey& key, const char* stage_name, std::string reason) {
        out.rejections.push_back({key.first, key.second, stage_name, std::move(reason)});
    };

    for (const auto& [key, pr] : corpus.prs) {
        all.kept.insert(key);
        const auto split = patch::split_patch(patch::parse_unified_diff(pr.diff_text));
        if (split.test_patch.empty()) {
            reject(key, stage::kWithTests, "no_tests");
            continue;
        }
        with_tests.kept.insert(key);

        const auto index = issue_index(corpus, pr.repo);
        const auto links = link_issue_to_pr(pr, index);
        if (links.empty()) {
            reject(key, stage::kLinked, "no_linked_issue");
            continue;
        }
        linked.kept.insert(key);

        const auto repo_it = corpus.repos.find(pr.repo);
        if (repo_it == corpus.repos.end()) {
            reject(key, stage::kInstance, "unknown_repo");
            continue;
        }
        const RepoRecord& repo = repo_it->second;

        CandidateInstance c;
        c.repo = pr.repo;
        c.pr = pr.number;
        c.linked_issues.assign(links.begin(), links.end());
        c.linked_issue = c.linked_issues.front();
        bool resolved = true;
        std::vector<std::string> parts;
        for (const int n : c.linked_issues) {
            const IssueRecord& issue = *index.at(n);
            resolved = resolved && issue.state == IssueState::Resolved;
            parts.push_back(issue.body.empty() ? issue.title : issue.title + "\n\n" + issue.body);
        }
        c.problem_statement = join(parts, "\n\n");
        c.diff_text = pr.diff_text;
        c.base_commit = pr.base_commit;
        c.language = repo.primary_language;
        c.license_id = repo.license_id;
        c.merge_time = pr.merge_time;
        c.created_at = index.at(c.linked_issues.front())->created_at;
        if (!c.created_at) c.created_at = pr.merge_time;

        auto d = filter_instance(c, repo, pr, resolved, policy);
        if (d.keep && trim_ascii(c.problem_statement).empty()) {
            d.keep = false;
            d.reason = "empty_problem_statement";
        }
        if (!d.keep) {
            reject(key, stage::kInstance, d.reason);
            continue;
        }
        instance.kept.insert(key);

        const auto& rd = out.repo_decisions.at(pr.repo);
        if (!rd.keep) {
            reject(key, stage::kRepo, "repo_" + rd.reason);
            continue;
        }
        repo_stage.kept.insert(key);
        out.candidates.push_back(std::move(c));
    }
    out.stages = {all, with_tests, linked, instance, repo_stage};
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json time_or_null(const std::optional<Timestamp>& t) { return t ? json(format_rfc3339(*t)) : json(nullptr); }

} // namespace

json to_json(const CandidateInstance& c) {
    return json{{"repo", c.repo},
                {"pr", c.pr},
                {"linked_issue", c.linked_issue ? json(*c.linked_issue) : json(nullptr)},
                {"linked_issues", c.linked_issues},
                {"problem_statement", c.problem_statement},
                {"diff_text", c.diff_text},
                {"base_commit", c.base_commit},
                {"language", c.language},
                {"license_id", c.license_id},
                {"merge_time", time_or_null(c.merge_time)},
                {"created_at", time_or_null(c.created_at)}};
}

CandidateInstance candidate_from_json(const json& j) {
    CandidateInstance c;
    try {
        c.repo = j.at("repo").get<std::string>();
        c.pr = j.at("pr").get<int>();
        if (!j.at("linked_issue").is_null()) c.linked_issue = j["linked_issue"].get<int>();
        c.linked_issues = j.value("linked_issues", std::vector<int>{});
        c.problem_statement = j.at("problem_statement").get<std::string>();
        c.diff_text = j.at("diff_text").get<std::string>();
        c.base_commit = j.at("base_commit").get<std::string>();
        c.language = j.at("language").get<std::string>();
        c.license_id = j.at("license_id").get<std::string>();
        c.merge_time = optional_time(j, "merge_time");
        c.created_at = optional_time(j, "created_at");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad candidate record: ") + e.what());
    }
    return c;
}

json to_json(const RepoRecord& r) {
    return json{{"full_name", r.full_name},
                {"primary_language", r.primary_language},
                {"stars", r.stars},
                {"closed_issue_count", r.closed_issue_count},
                {"license_id", r.license_id},
                {"is_long_tail_language", r.is_long_tail_language}};
}

RepoRecord repo_from_json(const json& j) {
    try {
        return parse_repo(j);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad repo record: ") + e.what());
    }
}

} // namespace harvest::corpus
