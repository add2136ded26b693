// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/seam.hpp"
#include "harvest/error.hpp"
#include "harvest/util.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <cstdlib>
#include <fstream>

namespace harvest::seam {

using nlohmann::json;

HttpCompletionClient::HttpCompletionClient(std::string endpoint, double timeout_seconds,
                                           std::map<std::string, std::string> headers)
    : timeout_seconds_(timeout_seconds), headers_(std::move(headers)) {
    constexpr std::string_view scheme = "http://";
    if (endpoint.rfind(scheme, 0) != 0) {
        throw Error(ErrorKind::InvalidArgument, "completion endpoint must start with http://: " + endpoint);
    }
    auto rest = endpoint.substr(scheme.size());
    const auto slash = rest.find('/');
    path_ = slash == std::string::npos ? "/" : rest.substr(slash);
    auto hostport = rest.substr(0, slash);
    const auto colon = hostport.rfind(':');
    if (colon != std::string::npos) {
        try {
            port_ = std::stoi(hostport.substr(colon + 1));
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidArgument, "bad port in endpoint: " + endpoint);
        }
        hostport.resize(colon);
    }
    if (hostport.empty()) throw Error(ErrorKind::InvalidArgument, "missing host in endpoint: " + endpoint);
    host_ = hostport;
}

std::string HttpCompletionClient::complete(const CompletionRequest& request) {
    httplib::Client cli(host_, port_);
    const auto secs = static_cast<time_t>(timeout_seconds_);
    cli.set_connection_timeout(10, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers hdrs;
    for (const auto& [k, v] : headers_) hdrs.emplace(k, v);
    const json body{{"kind", request.kind}, {"key", request.key}, {"payload", request.payload}};
    auto res = cli.Post(path_, hdrs, body.dump(), "application/json");
    if (!res) {
        throw Error(ErrorKind::Seam, fmt::format("completion request failed: {}", httplib::to_string(res.error())));
    }
    if (res->status != 200) throw Error(ErrorKind::Seam, fmt::format("completion endpoint returned {}", res->status));
    const auto parsed = json::parse(res->body, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object() && parsed.contains("text") && parsed["text"].is_string()) {
        return parsed["text"].get<std::string>();
    }
    return res->body;
}

std::shared_ptr<HttpCompletionClient> HttpCompletionClient::from_environment() {
    const char* url = std::getenv("HARVEST_COMPLETION_URL");
    if (!url || !*url) return nullptr;
    std::map<std::string, std::string> headers;
    if (const char* token = std::getenv("HARVEST_COMPLETION_TOKEN"); token && *token) {
        headers["Authorization"] = std::string("Bearer ") + token;
    }
    return std::make_shared<HttpCompletionClient>(url, 300, std::move(headers));
}

void ScriptedCompletionClient::push(const std::string& kind, const std::string& key, std::string response) {
    std::lock_guard lock(mu_);
    keyed_[{kind, key}].push_back(std::move(response));
}

void ScriptedCompletionClient::push_any(const std::string& kind, std::string response) {
    std::lock_guard lock(mu_);
    any_[kind].push_back(std::move(response));
}

void ScriptedCompletionClient::set_fallback(std::string response) {
    std::lock_guard lock(mu_);
    fallback_ = std::move(response);
}

std::string ScriptedCompletionClient::complete(const CompletionRequest& request) {
    std::lock_guard lock(mu_);
    ++calls_;
    if (auto it = keyed_.find({request.kind, request.key}); it != keyed_.end() && !it->second.empty()) {
        auto r = std::move(it->second.front());
        it->second.pop_front();
        return r;
    }
    if (auto it = any_.find(request.kind); it != any_.end() && !it->second.empty()) {
        auto r = std::move(it->second.front());
        it->second.pop_front();
        return r;
    }
    if (fallback_) return *fallback_;
    throw Error(ErrorKind::Seam, fmt::format("no scripted response for {} {}", request.kind, request.key));
}

std::size_t ScriptedCompletionClient::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::shared_ptr<ScriptedCompletionClient> ScriptedCompletionClient::from_ndjson(const std::string& text) {
    auto client = std::make_shared<ScriptedCompletionClient>();
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim_ascii(line).empty()) continue;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("kind") || !j.contains("response") ||
            !j["response"].is_string()) {
            throw Error(ErrorKind::Parse, fmt::format("script line {}: expected kind and response", line_no));
        }
        if (j.contains("key")) {
            client->push(j["kind"].get<std::string>(), j["key"].get<std::string>(), j["response"].get<std::string>());
        } else {
            client->push_any(j["kind"].get<std::string>(), j["response"].get<std::string>());
        }
    }
    return client;
}

RecordingCompletionClient::RecordingCompletionClient(std::shared_ptr<CompletionClient> inner,
                                                     std::filesystem::path log)
    : inner_(std::move(inner)), log_(std::move(log)) {}

std::string RecordingCompletionClient::complete(const CompletionRequest& request) {
    auto response = inner_->complete(request);
    const json rec{{"kind", request.kind}, {"key", request.key}, {"payload", request.payload}, {"response", response}};
    std::lock_guard lock(mu_);
    std::ofstream out(log_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot append to " + log_.string());
    out << rec.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    return response;
}

std::optional<std::string> fenced_block(const std::string& text, const std::vector<std::string>& labels, bool last) {
    std::optional<std::string> found;
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find("```", pos);
        if (open == std::string::npos) break;
        const auto eol = text.find('\n', open);
        if (eol == std::string::npos) break;
        const auto label = trim_ascii(text.substr(open + 3, eol - open - 3));
        const auto close = text.find("\n```", eol);
        if (close == std::string::npos) break;
        const auto body = text.substr(eol + 1, close - eol);
        pos = close + 4;
        for (const auto& l : labels) {
            if (to_lower_ascii(label) == l) {
                found = body;
                break;
            }
        }
        if (found && !last) return found;
    }
    return found;
}

json extract_json_object(const std::string& text) {
    if (auto block = fenced_block(text, {"json"}, true)) {
        auto j = json::parse(*block, nullptr, false);
        if (!j.is_discarded() && j.is_object()) return j;
    }
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open) {
        auto j = json::parse(text.substr(open, close - open + 1), nullptr, false);
        if (!j.is_discarded() && j.is_object()) return j;
    }
    throw Error(ErrorKind::Seam, "no JSON object in response");
}

} // namespace harvest::seam
