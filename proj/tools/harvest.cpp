// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

// Command-line front end. Exit codes: 0 success, 1 usage or config error,
// 2 stage failure (durable per-record output is kept for resume).

#include "harvest/dataset.hpp"
#include "harvest/enrich.hpp"
#include "harvest/error.hpp"
#include "harvest/metrics.hpp"
#include "harvest/pipeline.hpp"
#include "harvest/util.hpp"

#include "CLI11.hpp"
#include <fmt/format.h>

#include <iostream>

using namespace harvest;

namespace {

struct StageArgs {
    std::string config;
    std::string work_dir;
    std::string output;
    bool fresh = false;
};

void add_stage_options(CLI::App* cmd, StageArgs& a) {
    cmd->add_option("-c,--config", a.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--work-dir", a.work_dir, "override work_dir from the config");
    cmd->add_option("--output", a.output, "override the dataset output directory");
    cmd->add_flag("--fresh", a.fresh, "ignore journaled records and recompute");
}

pipeline::PipelineConfig load(const StageArgs& a) {
    auto c = pipeline::load_config(a.config);
    // Overrides come from the command line, so they resolve against the cwd.
    if (!a.work_dir.empty()) c.work_dir = std::filesystem::absolute(a.work_dir).string();
    if (!a.output.empty()) c.output = std::filesystem::absolute(a.output).string();
    return c;
}

void print_manifest(const pipeline::StageManifest& m) {
    std::cout << fmt::format("{}: {} in, {} out", m.stage, m.inputs, m.outputs);
    if (m.resumed) std::cout << fmt::format(" ({} resumed)", m.resumed);
    std::cout << '\n';
    for (const auto& [reason, n] : m.rejections) std::cout << fmt::format("  rejected {:>5}  {}\n", n, reason);
    for (const auto& [note, n] : m.notes) std::cout << fmt::format("  note     {:>5}  {}\n", n, note);
}

int run_stages(const StageArgs& a, const std::vector<pipeline::Stage>& stages) {
    pipeline::Pipeline p(load(a));
    for (auto s : stages) {
        if (a.fresh) p.reset_journal(s);
        print_manifest(p.run(s));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Build execution-validated issue-resolution task datasets from repository history."};
    app.require_subcommand(1);

    StageArgs args;
    std::vector<std::pair<CLI::App*, pipeline::Stage>> stage_cmds;
    const std::map<pipeline::Stage, std::string> help{
        {pipeline::Stage::Mine, "link PRs to issues and apply repository and instance filters"},
        {pipeline::Stage::Setup, "synthesize and verify an install config per repository"},
        {pipeline::Stage::Validate, "dual-pass execution; keep candidates with fail-to-pass tests"},
        {pipeline::Stage::Filter, "drop underspecified problem statements using judge ensembles"},
        {pipeline::Stage::Enrich, "attach diagnostic metadata and interface digests"},
        {pipeline::Stage::Expand, "synthesize statements for unlinked PRs, check leakage, validate"},
        {pipeline::Stage::Report, "write the dataset, funnel table and per-candidate dispositions"}};
    for (auto s : pipeline::all_stages()) {
        auto* cmd = app.add_subcommand(std::string(pipeline::to_string(s)), help.at(s));
        add_stage_options(cmd, args);
        stage_cmds.emplace_back(cmd, s);
    }
    auto* run_cmd = app.add_subcommand("run", "run every stage in order");
    add_stage_options(run_cmd, args);

    auto* check_cmd = app.add_subcommand("check-config", "validate a config file and print its hash");
    std::string check_path;
    check_cmd->add_option("config", check_path, "pipeline config")->required()->check(CLI::ExistingFile);

    auto* select_cmd = app.add_subcommand("select", "print instances of a dataset matching all terms");
    std::string select_dir;
    std::vector<std::string> terms;
    select_cmd->add_option("dataset", select_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    select_cmd->add_option("-w,--where", terms, "term such as code=B3, difficulty=easy, f2p>=2");

    auto* score_cmd = app.add_subcommand("score", "pass@k and a 95% interval from per-run results");
    std::string runs_path;
    int k = 1;
    int default_runs = 3;
    bool by_language = false;
    score_cmd->add_option("runs", runs_path, "ndjson of {task_id, run_index, resolved, language}")
        ->required()
        ->check(CLI::ExistingFile);
    score_cmd->add_option("-k", k, "k for pass@k")->check(CLI::PositiveNumber);
    score_cmd->add_option("--runs-per-task", default_runs, "declared runs per task")->check(CLI::PositiveNumber);
    score_cmd->add_flag("--by-language", by_language, "also report each language");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        for (const auto& [cmd, stage] : stage_cmds) {
            if (cmd->parsed()) return run_stages(args, {stage});
        }
        if (run_cmd->parsed()) return run_stages(args, pipeline::all_stages());
        if (check_cmd->parsed()) {
            const auto c = pipeline::load_config(check_path);
            std::cout << pipeline::config_hash(c) << '\n';
            return 0;
        }
        if (select_cmd->parsed()) {
            const auto query = enrich::parse_query(terms);
            const auto data = dataset::read_records(std::filesystem::path(select_dir) / dataset::kRecordsFile);
            for (const auto& t : enrich::select_subset(data, query)) std::cout << to_json(t).dump() << '\n';
            return 0;
        }
        if (score_cmd->parsed()) {
            const auto matrix = metrics::RunMatrix::from_ndjson(read_file(runs_path), default_runs);
            matrix.check_complete();
            const auto print = [&](const std::string& label, const std::optional<std::string>& lang) {
                const auto ci = metrics::sem_ci(matrix, k, lang);
                std::cout << fmt::format("{:<12} pass@{} {:7.2f}%  sem {:5.2f}  95% CI [{:.2f}%, {:.2f}%]  n={}\n", label,
                                         k, 100 * ci.mean, 100 * ci.sem, 100 * ci.low, 100 * ci.high, ci.tasks);
            };
            print("overall", std::nullopt);
            if (by_language) {
                for (const auto& [lang, v] : metrics::aggregate_pass(matrix, k, metrics::GroupBy::Language)) {
                    (void)v;
                    print(lang, lang);
                }
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        switch (e.kind()) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::Schema:
            return 1;
        default:
            return 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
