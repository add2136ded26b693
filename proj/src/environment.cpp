// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/environment.hpp"
#include "harvest/error.hpp"

#include <fmt/format.h>

namespace harvest {

using nlohmann::json;

namespace {

std::vector<std::string> string_list(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array()) throw Error(ErrorKind::Schema, fmt::format("'{}' must be a list of strings", key));
    std::vector<std::string> out;
    for (const auto& s : v) {
        if (!s.is_string()) throw Error(ErrorKind::Schema, fmt::format("'{}' must be a list of strings", key));
        out.push_back(s.get<std::string>());
    }
    return out;
}

} // namespace

json to_json(const InstallConfig& c) { return json{{"install", c.install}, {"test_cmd", c.test_cmd}}; }

InstallConfig install_config_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Schema, "install config must be an object");
    for (const auto& [k, v] : j.items()) {
        if (k != "install" && k != "test_cmd") throw Error(ErrorKind::Schema, "unknown install config key: " + k);
    }
    if (!j.contains("install") || !j.contains("test_cmd")) {
        throw Error(ErrorKind::Schema, "install config needs 'install' and 'test_cmd'");
    }
    InstallConfig c;
    c.install = string_list(j, "install");
    c.test_cmd = string_list(j, "test_cmd");
    return c;
}

json to_json(const RepoSnapshot& s) {
    return json{{"repo", s.repo},
                {"commit", s.commit},
                {"selected_from", s.selected_from},
                {"merge_time", format_rfc3339(s.merge_time)}};
}

RepoSnapshot snapshot_from_json(const json& j) {
    try {
        RepoSnapshot s;
        s.repo = j.at("repo").get<std::string>();
        s.commit = j.at("commit").get<std::string>();
        s.selected_from = j.at("selected_from").get<int>();
        s.merge_time = parse_rfc3339(j.at("merge_time").get<std::string>());
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad snapshot: ") + e.what());
    }
}

json to_json(const BaseImageSpec& b) {
    return json{{"language", b.language},
                {"toolchain_version", b.toolchain_version},
                {"image_ref", b.image_ref},
                {"env_defaults", b.env_defaults}};
}

BaseImageSpec base_image_from_json(const json& j) {
    try {
        BaseImageSpec b;
        b.language = j.at("language").get<std::string>();
        b.toolchain_version = j.at("toolchain_version").get<std::string>();
        b.image_ref = j.at("image_ref").get<std::string>();
        if (j.contains("env_defaults")) b.env_defaults = j.at("env_defaults").get<std::map<std::string, std::string>>();
        return b;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad base image: ") + e.what());
    }
}

} // namespace harvest
