// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/util.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace harvest {

/// Per-repository install and test procedure: an object with exactly the
/// keys "install" and "test_cmd", each a list of shell commands.
struct InstallConfig {
    std::vector<std::string> install;
    std::vector<std::string> test_cmd;

    bool operator==(const InstallConfig&) const = default;
};

nlohmann::json to_json(const InstallConfig& c);
/// Throws Error(Schema) unless the object has exactly the two keys.
InstallConfig install_config_from_json(const nlohmann::json& j);

struct RepoSnapshot {
    std::string repo;
    std::string commit;
    int selected_from = 0;  // PR number
    Timestamp merge_time{};
};

nlohmann::json to_json(const RepoSnapshot& s);
RepoSnapshot snapshot_from_json(const nlohmann::json& j);

struct BaseImageSpec {
    std::string language;
    std::string toolchain_version;
    std::string image_ref;
    std::map<std::string, std::string> env_defaults;
};

nlohmann::json to_json(const BaseImageSpec& b);
BaseImageSpec base_image_from_json(const nlohmann::json& j);

enum class NetworkPolicy { Offline, Online };

struct EnvironmentHandle {
    std::string id;           // content key of (base, snapshot, install)
    BaseImageSpec base;
    std::string repo_root;    // path of the repository inside the environment
    NetworkPolicy network = NetworkPolicy::Offline;
    bool cache_hit = false;
    std::string backend_ref;  // directory or image tag, backend specific
};

} // namespace harvest
