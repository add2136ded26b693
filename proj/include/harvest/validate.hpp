// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/corpus.hpp"
#include "harvest/environment.hpp"
#include "harvest/logparse.hpp"
#include "harvest/patch.hpp"
#include "harvest/sandbox.hpp"

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace harvest::validate {

using NameSet = std::set<std::string>;

struct Transitions {
    NameSet f2p, p2p, p2f, f2f;
    NameSet skipped;      // in both maps, SKIPPED on at least one side
    NameSet only_before;
    NameSet only_after;
};

/// ERROR counts as failing; a name SKIPPED on either side is left out of
/// the four transition sets.
Transitions classify_tests(const logparse::TestStatusMap& before, const logparse::TestStatusMap& after);

namespace infra {
inline constexpr const char* kApply = "apply";
inline constexpr const char* kTimeout = "timeout";
inline constexpr const char* kMissingRunner = "missing_runner";
inline constexpr const char* kSandbox = "sandbox";
} // namespace infra

struct DualPassOutcome {
    logparse::TestStatusMap before;
    logparse::TestStatusMap after;
    Transitions sets;
    bool accepted = false;
    std::optional<std::string> infra_failure;  // infra::*
    std::string detail;
    std::string before_start_hash;  // tree hash of each fresh view before patching
    std::string after_start_hash;
    ExecutionTrace before_trace;
    ExecutionTrace after_trace;
};

struct AcceptancePolicy {
    bool strict = false;  // also reject when the solution breaks a passing test
};

struct AcceptDecision {
    bool accepted = false;
    std::vector<std::string> reasons;  // "no_f2p", "regression", "infra:<category>"
};

AcceptDecision accept(const DualPassOutcome& outcome, const AcceptancePolicy& policy = {});

struct DualPassOptions {
    double test_timeout_seconds = 3600;
    std::vector<std::string> rebuild;  // run after patching, before test_cmd
    AcceptancePolicy policy;
    NameSet exclude;  // flaky names, never counted as f2p
};

/// Pass 1: fresh view, test patch, rebuild, full test_cmd. Pass 2: fresh
/// view, test patch, solution patch, rebuild, full test_cmd. Patch or
/// infrastructure failures yield infra_failure and accepted=false.
DualPassOutcome dual_pass(const corpus::CandidateInstance& instance, const EnvironmentHandle& env,
                          const patch::SplitPatch& split, const InstallConfig& config,
                          const logparse::ParserSpec& parser, sandbox::Sandbox& sandbox,
                          const DualPassOptions& options = {});

struct FlakeReport {
    std::vector<logparse::TestStatusMap> runs;
    NameSet flaky;
    std::vector<int> infra_runs;  // 0-based indices of runs that hit an infra failure
};

/// Runs pass 1 `repeats` times; a name whose status differs between runs,
/// or that is missing from some successful run, is flaky. Throws
/// Error(Precondition) when repeats < 2.
FlakeReport flake_probe(const corpus::CandidateInstance& instance, const EnvironmentHandle& env,
                        const patch::SplitPatch& split, const InstallConfig& config,
                        const logparse::ParserSpec& parser, sandbox::Sandbox& sandbox, int repeats,
                        const DualPassOptions& options = {});

/// Sorted-list serialization; traces are not included.
nlohmann::json to_json(const DualPassOutcome& outcome);
DualPassOutcome outcome_from_json(const nlohmann::json& j);

} // namespace harvest::validate
