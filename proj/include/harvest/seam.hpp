// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include <json.hpp>

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace harvest::seam {

/// One request to an external text-completion service. `kind` names the
/// caller ("setup", "judge", "annotate", ...), `key` identifies the unit of
/// work (instance id, attempt) and `payload` carries the structured fields.
struct CompletionRequest {
    std::string kind;
    std::string key;
    nlohmann::json payload;
};

/// Generic completion transport. Implementations must be callable from
/// several threads at once. Failures throw Error(Seam).
class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

/// POSTs {"kind","key","payload"} as JSON to the endpoint and takes the
/// "text" field of a JSON response (or the raw body otherwise).
class HttpCompletionClient : public CompletionClient {
public:
    /// `endpoint` like "http://host:port/path"; plain HTTP only.
    explicit HttpCompletionClient(std::string endpoint, double timeout_seconds = 300,
                                  std::map<std::string, std::string> headers = {});
    std::string complete(const CompletionRequest& request) override;

    /// Builds a client from HARVEST_COMPLETION_URL (and optional
    /// HARVEST_COMPLETION_TOKEN as a bearer token); null when unset.
    static std::shared_ptr<HttpCompletionClient> from_environment();

private:
    std::string host_;
    int port_ = 80;
    std::string path_;
    double timeout_seconds_;
    std::map<std::string, std::string> headers_;
};

/// Replies from a fixed script: per (kind, key) queue first, then a per-kind
/// queue, then the fallback if any. Thread-safe.
class ScriptedCompletionClient : public CompletionClient {
public:
    void push(const std::string& kind, const std::string& key, std::string response);
    void push_any(const std::string& kind, std::string response);
    void set_fallback(std::string response);
    std::string complete(const CompletionRequest& request) override;

    /// Loads newline-delimited {"kind","key","response"} records, as written
    /// by RecordingCompletionClient ("key" may be omitted to match any key).
    static std::shared_ptr<ScriptedCompletionClient> from_ndjson(const std::string& text);

    [[nodiscard]] std::size_t calls() const;

private:
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, std::deque<std::string>> keyed_;
    std::map<std::string, std::deque<std::string>> any_;
    std::optional<std::string> fallback_;
    std::size_t calls_ = 0;
};

/// Forwards to another client and appends every exchange to a log file.
class RecordingCompletionClient : public CompletionClient {
public:
    RecordingCompletionClient(std::shared_ptr<CompletionClient> inner, std::filesystem::path log);
    std::string complete(const CompletionRequest& request) override;

private:
    std::shared_ptr<CompletionClient> inner_;
    std::filesystem::path log_;
    std::mutex mu_;
};

/// First fenced code block with one of the given info strings ("" matches
/// an unlabeled fence); the last such block when `last` is set.
std::optional<std::string> fenced_block(const std::string& text, const std::vector<std::string>& labels,
                                        bool last = false);

/// Parses a JSON object out of model text: a fenced json block, else the
/// outermost {...} span. Throws Error(Seam) when nothing parses.
nlohmann::json extract_json_object(const std::string& text);

} // namespace harvest::seam
