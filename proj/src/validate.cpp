// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/validate.hpp"
#include "harvest/error.hpp"
#include "harvest/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>

namespace harvest::validate {

using logparse::TestStatus;
using nlohmann::json;

namespace {

bool failing(TestStatus s) { return s == TestStatus::Failed || s == TestStatus::Error; }

} // namespace

Transitions classify_tests(const logparse::TestStatusMap& before, const logparse::TestStatusMap& after) {
    Transitions t;
    for (const auto& [name, b] : before) {
        const auto it = after.find(name);
        if (it == after.end()) {
            t.only_before.insert(name);
            continue;
        }
        const auto a = it->second;
        if (b == TestStatus::Skipped || a == TestStatus::Skipped) {
            t.skipped.insert(name);
        } else if (failing(b)) {
            (a == TestStatus::Passed ? t.f2p : t.f2f).insert(name);
        } else {
            (a == TestStatus::Passed ? t.p2p : t.p2f).insert(name);
        }
    }
    for (const auto& [name, a] : after) {
        if (!before.count(name)) t.only_after.insert(name);
    }
    return t;
}

AcceptDecision accept(const DualPassOutcome& outcome, const AcceptancePolicy& policy) {
    AcceptDecision d;
    if (outcome.infra_failure) d.reasons.push_back("infra:" + *outcome.infra_failure);
    if (outcome.sets.f2p.empty()) d.reasons.push_back("no_f2p");
    if (policy.strict && !outcome.sets.p2f.empty()) d.reasons.push_back("regression");
    d.accepted = d.reasons.empty();
    return d;
}

namespace {

struct PassResult {
    logparse::TestStatusMap statuses;
    ExecutionTrace trace;
    std::string start_hash;
    std::optional<std::string> infra;
    std::string detail;
};

PassResult run_pass(const EnvironmentHandle& env, const std::vector<const std::string*>& patches,
                    const InstallConfig& config, const logparse::ParserSpec& parser, sandbox::Sandbox& sandbox,
                    const DualPassOptions& options) {
    PassResult r;
    try {
        auto view = sandbox.reset(env);
        r.start_hash = view->tree_hash();
        for (const auto* p : patches) {
            if (p->empty()) continue;
            try {
                view->apply_patch(*p);
            } catch (const Error& e) {
                r.infra = infra::kApply;
                r.detail = e.what();
                return r;
            }
        }
        std::vector<std::string> cmds = options.rebuild;
        cmds.insert(cmds.end(), config.test_cmd.begin(), config.test_cmd.end());
        r.trace = view->run(cmds, options.test_timeout_seconds);
    } catch (const Error& e) {
        r.infra = infra::kSandbox;
        r.detail = e.what();
        return r;
    }
    for (const auto& c : r.trace.commands) {
        if (c.timed_out) {
            r.infra = infra::kTimeout;
            r.detail = "timed out: " + c.command;
            return r;
        }
        if (c.exit_code == 127) {
            r.infra = infra::kMissingRunner;
            r.detail = "command not found: " + c.command;
            return r;
        }
    }
    r.statuses = logparse::apply_parser(parser, r.trace);
    return r;
}

} // namespace

DualPassOutcome dual_pass(const corpus::CandidateInstance& instance, const EnvironmentHandle& env,
                          const patch::SplitPatch& split, const InstallConfig& config,
                          const logparse::ParserSpec& parser, sandbox::Sandbox& sandbox,
                          const DualPassOptions& options) {
    DualPassOutcome o;
    const auto label = fmt::format("{}#{}", instance.repo, instance.pr);

    auto first = run_pass(env, {&split.test_patch}, config, parser, sandbox, options);
    o.before = std::move(first.statuses);
    o.before_trace = std::move(first.trace);
    o.before_start_hash = first.start_hash;
    if (first.infra) {
        o.infra_failure = first.infra;
        o.detail = fmt::format("{} pass 1: {}", label, first.detail);
        return o;
    }

    auto second = run_pass(env, {&split.test_patch, &split.solution_patch}, config, parser, sandbox, options);
    o.after = std::move(second.statuses);
    o.after_trace = std::move(second.trace);
    o.after_start_hash = second.start_hash;
    if (second.infra) {
        o.infra_failure = second.infra;
        o.detail = fmt::format("{} pass 2: {}", label, second.detail);
        return o;
    }

    o.sets = classify_tests(o.before, o.after);
    for (const auto& name : options.exclude) o.sets.f2p.erase(name);
    o.accepted = accept(o, options.policy).accepted;
    return o;
}

FlakeReport flake_probe(const corpus::CandidateInstance& instance, const EnvironmentHandle& env,
                        const patch::SplitPatch& split, const InstallConfig& config,
                        const logparse::ParserSpec& parser, sandbox::Sandbox& sandbox, int repeats,
                        const DualPassOptions& options) {
    if (repeats < 2) {
        throw Error(ErrorKind::Precondition,
                    fmt::format("flake_probe {}#{}: repeats must be at least 2, got {}", instance.repo, instance.pr,
                                repeats));
    }
    FlakeReport rep;
    for (int i = 0; i < repeats; ++i) {
        auto r = run_pass(env, {&split.test_patch}, config, parser, sandbox, options);
        if (r.infra) rep.infra_runs.push_back(i);
        rep.runs.push_back(std::move(r.statuses));
    }
    std::map<std::string, std::set<TestStatus>> seen;
    std::map<std::string, int> present;
    int good = 0;
    for (std::size_t i = 0; i < rep.runs.size(); ++i) {
        if (std::find(rep.infra_runs.begin(), rep.infra_runs.end(), static_cast<int>(i)) != rep.infra_runs.end()) {
            continue;
        }
        ++good;
        for (const auto& [name, s] : rep.runs[i]) {
            seen[name].insert(s);
            ++present[name];
        }
    }
    for (const auto& [name, statuses] : seen) {
        if (statuses.size() > 1 || present[name] != good) rep.flaky.insert(name);
    }
    return rep;
}

namespace {

json names(const NameSet& s) { return json(std::vector<std::string>(s.begin(), s.end())); }

NameSet name_set(const json& j, const char* key) {
    NameSet s;
    if (!j.contains(key)) return s;
    for (const auto& v : j.at(key)) s.insert(v.get<std::string>());
    return s;
}

} // namespace

json to_json(const DualPassOutcome& o) {
    json j{{"before", logparse::to_json(o.before)},
           {"after", logparse::to_json(o.after)},
           {"f2p", names(o.sets.f2p)},
           {"p2p", names(o.sets.p2p)},
           {"p2f", names(o.sets.p2f)},
           {"f2f", names(o.sets.f2f)},
           {"only_before", names(o.sets.only_before)},
           {"only_after", names(o.sets.only_after)},
           {"accepted", o.accepted}};
    j["infra_failure"] = o.infra_failure ? json(*o.infra_failure) : json(nullptr);
    if (!o.detail.empty()) j["detail"] = o.detail;
    return j;
}

DualPassOutcome outcome_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Schema, "dual-pass outcome must be an object");
    DualPassOutcome o;
    try {
        o.before = logparse::status_map_from_json(j.at("before"));
        o.after = logparse::status_map_from_json(j.at("after"));
        o.sets.f2p = name_set(j, "f2p");
        o.sets.p2p = name_set(j, "p2p");
        o.sets.p2f = name_set(j, "p2f");
        o.sets.f2f = name_set(j, "f2f");
        o.sets.only_before = name_set(j, "only_before");
        o.sets.only_after = name_set(j, "only_after");
        o.accepted = j.at("accepted").get<bool>();
        if (j.contains("infra_failure") && !j["infra_failure"].is_null()) {
            o.infra_failure = j["infra_failure"].get<std::string>();
        }
        o.detail = j.value("detail", "");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("dual-pass outcome: ") + e.what());
    }
    // Skipped names are not serialized; recover them from the maps.
    for (const auto& [name, b] : o.before) {
        const auto it = o.after.find(name);
        if (it != o.after.end() && (b == TestStatus::Skipped || it->second == TestStatus::Skipped)) {
            o.sets.skipped.insert(name);
        }
    }
    return o;
}

} // namespace harvest::validate
