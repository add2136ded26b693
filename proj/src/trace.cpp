// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/trace.hpp"

#include "harvest/error.hpp"

#include <algorithm>

namespace harvest {

std::string ExecutionTrace::combined_output() const {
    std::string out;
    for (const auto& c : commands) {
        out += c.stdout_text;
        if (!out.empty() && out.back() != '\n' && !c.stderr_text.empty()) out += '\n';
        out += c.stderr_text;
        if (!out.empty() && out.back() != '\n') out += '\n';
    }
    return out;
}

bool ExecutionTrace::any_timed_out() const {
    return std::any_of(commands.begin(), commands.end(), [](const auto& c) { return c.timed_out; });
}

bool ExecutionTrace::all_succeeded() const {
    return std::all_of(commands.begin(), commands.end(),
                       [](const auto& c) { return c.exit_code == 0 && !c.timed_out; });
}

void to_json(nlohmann::json& j, const CommandRecord& r) {
    j = nlohmann::json{{"command", r.command},         {"exit_code", r.exit_code},
                       {"stdout", r.stdout_text},       {"stderr", r.stderr_text},
                       {"duration_seconds", r.duration_seconds},
                       {"timed_out", r.timed_out},      {"truncated", r.truncated}};
}

void from_json(const nlohmann::json& j, CommandRecord& r) {
    r.command = j.at("command").get<std::string>();
    r.exit_code = j.at("exit_code").get<int>();
    r.stdout_text = j.value("stdout", "");
    r.stderr_text = j.value("stderr", "");
    r.duration_seconds = j.value("duration_seconds", 0.0);
    r.timed_out = j.value("timed_out", false);
    r.truncated = j.value("truncated", false);
}

std::string trace_to_ndjson(const ExecutionTrace& trace) {
    // error_handler::replace keeps binary test output from aborting the dump
    std::string out = nlohmann::json{{"started_at", format_rfc3339(trace.started_at)},
                                     {"truncated", trace.truncated}}
                          .dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out += '\n';
    for (const auto& c : trace.commands) {
        out += nlohmann::json(c).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

ExecutionTrace trace_from_ndjson(std::string_view text) {
    ExecutionTrace trace;
    const auto lines = split_lines(text);
    if (lines.empty()) throw Error(ErrorKind::Parse, "empty trace file");
    try {
        const auto head = nlohmann::json::parse(lines.front());
        trace.started_at = parse_rfc3339(head.at("started_at").get<std::string>());
        trace.truncated = head.value("truncated", false);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            trace.commands.push_back(nlohmann::json::parse(lines[i]).get<CommandRecord>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("bad trace record: ") + e.what());
    }
    return trace;
}

} // namespace harvest
