// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/instance.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace harvest::dataset {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kRecordsFile = "instances.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";

struct Manifest {
    int schema_version = kSchemaVersion;
    std::size_t instances = 0;
    std::map<std::string, std::size_t> by_language;
    std::map<std::string, std::size_t> by_origin;
    std::string config_hash;
    nlohmann::json environments = nlohmann::json::object();  // repo -> image and snapshot
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

/// One record per line, sorted by instance_id, newline terminated.
/// Throws Error(Schema) naming the instance and field on an invariant
/// violation, or on a duplicate instance_id.
std::string render_records(std::vector<TaskInstance> instances);

std::vector<TaskInstance> parse_records(const std::string& text);
std::vector<TaskInstance> read_records(const std::filesystem::path& file);

/// Writes instances.jsonl and manifest.json into `dir` (created if
/// needed). Nothing is written when validation fails.
Manifest emit_dataset(const std::vector<TaskInstance>& instances, const std::filesystem::path& dir,
                      const std::string& config_hash,
                      const nlohmann::json& environments = nlohmann::json::object());

} // namespace harvest::dataset
