// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/dataset.hpp"
#include "harvest/error.hpp"
#include "harvest/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>

namespace harvest::dataset {

using nlohmann::json;
namespace fs = std::filesystem;

json to_json(const Manifest& m) {
    return json{{"schema_version", m.schema_version}, {"instances", m.instances}, {"by_language", m.by_language},
                {"by_origin", m.by_origin},           {"config_hash", m.config_hash}, {"environments", m.environments}};
}

Manifest manifest_from_json(const json& j) {
    try {
        Manifest m;
        m.schema_version = j.at("schema_version").get<int>();
        m.instances = j.at("instances").get<std::size_t>();
        m.by_language = j.at("by_language").get<std::map<std::string, std::size_t>>();
        m.by_origin = j.at("by_origin").get<std::map<std::string, std::size_t>>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.environments = j.value("environments", json::object());
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("manifest: ") + e.what());
    }
}

std::string render_records(std::vector<TaskInstance> instances) {
    std::sort(instances.begin(), instances.end(),
              [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
    std::string out;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        check_instance(instances[i]);
        if (i > 0 && instances[i].instance_id == instances[i - 1].instance_id) {
            throw Error(ErrorKind::Schema, fmt::format("{}: instance_id: duplicate", instances[i].instance_id));
        }
        out += to_json(instances[i]).dump();
        out += '\n';
    }
    return out;
}

std::vector<TaskInstance> parse_records(const std::string& text) {
    std::vector<TaskInstance> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim_ascii(line).empty()) continue;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorKind::Parse, fmt::format("record line {}: not JSON", line_no));
        out.push_back(instance_from_json(j));
    }
    return out;
}

std::vector<TaskInstance> read_records(const fs::path& file) {
    if (!fs::exists(file)) return {};
    return parse_records(read_file(file));
}

Manifest emit_dataset(const std::vector<TaskInstance>& instances, const fs::path& dir, const std::string& config_hash,
                      const json& environments) {
    const auto records = render_records(instances);
    Manifest m;
    m.instances = instances.size();
    m.config_hash = config_hash;
    m.environments = environments;
    for (const auto& t : instances) {
        ++m.by_language[t.language];
        ++m.by_origin[t.origin];
    }
    fs::create_directories(dir);
    write_file_atomic(dir / kRecordsFile, records);
    write_file_atomic(dir / kManifestFile, to_json(m).dump(2) + "\n");
    return m;
}

} // namespace harvest::dataset
