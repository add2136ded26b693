// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/corpus.hpp"
#include "harvest/sandbox.hpp"
#include "harvest/seam.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace harvest::pipeline {

/// Where a model-backed step gets its answers. "builtin" uses the
/// rule-based fallback, "scripted" replays an ndjson file of
/// {kind, key?, response} records, "http" posts to HARVEST_COMPLETION_URL.
struct SeamConfig {
    std::string type = "builtin";
    std::string path;  // scripted only, relative to the config file
};

struct JudgeConfig {
    std::string id;
    SeamConfig seam;
};

struct PipelineConfig {
    std::filesystem::path base_dir;  // directory of the config file; not hashed

    std::string events;     // newline-delimited repo/issue/pull_request records
    std::string snapshots;  // <root>/<owner>__<name>/<commit>/
    std::string work_dir = "work";
    std::string output = "dataset";

    corpus::FilterPolicy filter_policy;

    struct Setup {
        int budget = 1;
        int max_steps = 40;
        double step_timeout = 1800;
        double test_timeout = 3600;
        SeamConfig synthesizer;
    } setup;

    struct Sandbox {
        std::string backend = "local";  // local | container
        int parallelism = 1;
        std::optional<bool> namespaces;  // local only; auto-detected when unset
        std::string network = "offline";
        double install_timeout = 1800;
        std::string engine = "docker";  // container only
    } sandbox;

    struct Validate {
        bool strict = false;
        int flake_repeats = 0;  // 0 disables the probe, otherwise >= 2
    } validate;

    struct Filter {
        std::string strategy = "consensus";
        std::string variant = "verified";
        std::vector<JudgeConfig> judges;  // none: every instance passes
    } filter;

    struct Enrich {
        SeamConfig annotator;
        SeamConfig interfaces;
    } enrich;

    struct Expand {
        bool enabled = true;
        SeamConfig generator;
        double max_overlap = 0.3;
    } expand;

    /// Resolves a path from the config against base_dir.
    [[nodiscard]] std::filesystem::path resolve(const std::string& p) const;
};

/// Throws Error(Schema) on unknown keys, wrong types or bad values.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& file);

/// sha256 of the canonical JSON form without work_dir and output, so the
/// hash names what was computed rather than where it was written.
std::string config_hash(const PipelineConfig& c);

enum class Stage { Mine, Setup, Validate, Filter, Enrich, Expand, Report };

std::string_view to_string(Stage s);
Stage stage_from_string(const std::string& name);  // Error(InvalidArgument)
const std::vector<Stage>& all_stages();            // execution order
std::vector<Stage> prerequisites(Stage s);

/// Stage-level summary, also written as <work>/<stage>/manifest.json.
struct StageManifest {
    std::string stage;
    std::string config_hash;
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::map<std::string, std::size_t> rejections;  // reason -> count
    std::map<std::string, std::size_t> notes;       // non-terminal tags, e.g. annotation_failed
    std::size_t resumed = 0;                        // records reused from the journal
};

nlohmann::json to_json(const StageManifest& m);
StageManifest stage_manifest_from_json(const nlohmann::json& j);

/// Candidate-level terminal disposition.
struct Disposition {
    std::string instance_id;
    std::string stage;   // stage that rejected it, or "released"
    std::string reason;  // empty when released
};

/// Test doubles; anything left unset is built from the config.
struct Overrides {
    std::shared_ptr<sandbox::Sandbox> sandbox;
    std::map<std::string, std::shared_ptr<seam::CompletionClient>> clients;  // by seam path or "http"
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config, Overrides overrides = {});

    /// Runs one stage. Throws Error(Pipeline) naming a missing prerequisite.
    StageManifest run(Stage stage);
    /// Runs every stage in order.
    std::vector<StageManifest> run_all();

    /// Drops the stage's journal so the next run recomputes everything.
    void reset_journal(Stage stage) const;

    [[nodiscard]] std::filesystem::path stage_dir(Stage s) const;
    [[nodiscard]] std::filesystem::path work_dir() const;
    [[nodiscard]] std::filesystem::path output_dir() const;
    [[nodiscard]] const PipelineConfig& config() const { return config_; }

private:
    StageManifest mine();
    StageManifest setup();
    StageManifest validate();
    StageManifest filter();
    StageManifest enrich();
    StageManifest expand();
    StageManifest report();

    sandbox::Sandbox& sandbox();
    std::shared_ptr<seam::CompletionClient> client(const SeamConfig& seam);
    const corpus::Corpus& corpus();

    PipelineConfig config_;
    Overrides overrides_;
    std::string hash_;
    std::optional<corpus::Corpus> corpus_;
    std::shared_ptr<sandbox::Sandbox> sandbox_;
    std::map<std::string, std::shared_ptr<seam::CompletionClient>> clients_;
};

} // namespace harvest::pipeline
