// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/util.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace harvest {

struct CommandRecord {
    std::string command;
    int exit_code = 0;
    std::string stdout_text;
    std::string stderr_text;
    double duration_seconds = 0.0;
    bool timed_out = false;   // killed by the runner's timeout; exit_code is then -1
    bool truncated = false;   // output exceeded the per-command cap
};

struct ExecutionTrace {
    std::vector<CommandRecord> commands;
    Timestamp started_at{};
    bool truncated = false;

    /// stdout then stderr of each command, in command order.
    [[nodiscard]] std::string combined_output() const;
    [[nodiscard]] bool any_timed_out() const;
    [[nodiscard]] bool all_succeeded() const;
};

void to_json(nlohmann::json& j, const CommandRecord& r);
void from_json(const nlohmann::json& j, CommandRecord& r);

/// Newline-delimited command records; the first line carries started_at.
std::string trace_to_ndjson(const ExecutionTrace& trace);
ExecutionTrace trace_from_ndjson(std::string_view text);

} // namespace harvest
