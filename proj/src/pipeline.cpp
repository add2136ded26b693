// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/pipeline.hpp"
#include "harvest/dataset.hpp"
#include "harvest/enrich.hpp"
#include "harvest/error.hpp"
#include "harvest/expand.hpp"
#include "harvest/instance.hpp"
#include "harvest/quality.hpp"
#include "harvest/setup.hpp"
#include "harvest/util.hpp"
#include "harvest/validate.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace harvest::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

// --- config -------------------------------------------------------------------------

namespace {

void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorKind::Schema, fmt::format("config: {} must be an object", where));
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
            throw Error(ErrorKind::Schema, fmt::format("config: unknown key '{}{}'", where.empty() ? "" : where + ".", k));
        }
    }
}

template <class T>
void read_into(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::Schema, fmt::format("config: {}{} has the wrong type", where.empty() ? "" : where + ".", key));
    }
}

SeamConfig seam_from_json(const json& j, const std::string& where) {
    SeamConfig s;
    if (j.is_string()) {
        s.type = j.get<std::string>();
    } else {
        only_keys(j, {"type", "path"}, where);
        read_into(j, "type", s.type, where);
        read_into(j, "path", s.path, where);
    }
    if (s.type != "builtin" && s.type != "scripted" && s.type != "http") {
        throw Error(ErrorKind::Schema, fmt::format("config: {}.type must be builtin, scripted or http", where));
    }
    if (s.type == "scripted" && s.path.empty()) {
        throw Error(ErrorKind::Schema, fmt::format("config: {} is scripted but has no path", where));
    }
    return s;
}

json to_json(const SeamConfig& s) {
    json j{{"type", s.type}};
    if (!s.path.empty()) j["path"] = s.path;
    return j;
}

} // namespace

fs::path PipelineConfig::resolve(const std::string& p) const {
    const fs::path path(p);
    if (path.is_absolute() || base_dir.empty()) return path;
    return base_dir / path;
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig c;
    c.base_dir = base_dir;
    only_keys(j, {"events", "snapshots", "work_dir", "output", "filter_policy", "setup", "sandbox", "validate", "filter",
                  "enrich", "expand"},
              "");
    read_into(j, "events", c.events, "");
    read_into(j, "snapshots", c.snapshots, "");
    read_into(j, "work_dir", c.work_dir, "");
    read_into(j, "output", c.output, "");
    if (c.events.empty()) throw Error(ErrorKind::Schema, "config: events is required");
    if (c.snapshots.empty()) throw Error(ErrorKind::Schema, "config: snapshots is required");
    if (c.work_dir.empty() || c.output.empty()) throw Error(ErrorKind::Schema, "config: work_dir and output must be set");

    if (j.contains("filter_policy")) {
        try {
            c.filter_policy = corpus::policy_from_json(j["filter_policy"]);
        } catch (const Error& e) {
            throw Error(ErrorKind::Schema, std::string("config: filter_policy: ") + e.what());
        }
    }
    if (j.contains("setup")) {
        const auto& s = j["setup"];
        only_keys(s, {"budget", "max_steps", "step_timeout", "test_timeout", "synthesizer"}, "setup");
        read_into(s, "budget", c.setup.budget, "setup");
        read_into(s, "max_steps", c.setup.max_steps, "setup");
        read_into(s, "step_timeout", c.setup.step_timeout, "setup");
        read_into(s, "test_timeout", c.setup.test_timeout, "setup");
        if (s.contains("synthesizer")) c.setup.synthesizer = seam_from_json(s["synthesizer"], "setup.synthesizer");
    }
    if (j.contains("sandbox")) {
        const auto& s = j["sandbox"];
        only_keys(s, {"backend", "parallelism", "namespaces", "network", "install_timeout", "engine"}, "sandbox");
        read_into(s, "backend", c.sandbox.backend, "sandbox");
        read_into(s, "parallelism", c.sandbox.parallelism, "sandbox");
        if (s.contains("namespaces") && !s["namespaces"].is_null()) {
            bool ns = false;
            read_into(s, "namespaces", ns, "sandbox");
            c.sandbox.namespaces = ns;
        }
        read_into(s, "network", c.sandbox.network, "sandbox");
        read_into(s, "install_timeout", c.sandbox.install_timeout, "sandbox");
        read_into(s, "engine", c.sandbox.engine, "sandbox");
    }
    if (j.contains("validate")) {
        const auto& s = j["validate"];
        only_keys(s, {"strict", "flake_repeats"}, "validate");
        read_into(s, "strict", c.validate.strict, "validate");
        read_into(s, "flake_repeats", c.validate.flake_repeats, "validate");
    }
    if (j.contains("filter")) {
        const auto& s = j["filter"];
        only_keys(s, {"strategy", "variant", "judges"}, "filter");
        read_into(s, "strategy", c.filter.strategy, "filter");
        read_into(s, "variant", c.filter.variant, "filter");
        if (s.contains("judges")) {
            if (!s["judges"].is_array()) throw Error(ErrorKind::Schema, "config: filter.judges must be an array");
            for (std::size_t i = 0; i < s["judges"].size(); ++i) {
                const auto& jj = s["judges"][i];
                const auto where = fmt::format("filter.judges[{}]", i);
                only_keys(jj, {"id", "seam"}, where);
                JudgeConfig jc;
                read_into(jj, "id", jc.id, where);
                if (jc.id.empty()) throw Error(ErrorKind::Schema, "config: " + where + ".id is required");
                if (jj.contains("seam")) jc.seam = seam_from_json(jj["seam"], where + ".seam");
                c.filter.judges.push_back(std::move(jc));
            }
        }
    }
    if (j.contains("enrich")) {
        const auto& s = j["enrich"];
        only_keys(s, {"annotator", "interfaces"}, "enrich");
        if (s.contains("annotator")) c.enrich.annotator = seam_from_json(s["annotator"], "enrich.annotator");
        if (s.contains("interfaces")) c.enrich.interfaces = seam_from_json(s["interfaces"], "enrich.interfaces");
    }
    if (j.contains("expand")) {
        const auto& s = j["expand"];
        only_keys(s, {"enabled", "generator", "max_overlap"}, "expand");
        read_into(s, "enabled", c.expand.enabled, "expand");
        read_into(s, "max_overlap", c.expand.max_overlap, "expand");
        if (s.contains("generator")) c.expand.generator = seam_from_json(s["generator"], "expand.generator");
    }

    // Value checks.
    const auto bad = [](const std::string& m) { return Error(ErrorKind::Schema, "config: " + m); };
    if (c.setup.budget < 1) throw bad("setup.budget must be >= 1");
    if (c.setup.max_steps < 1) throw bad("setup.max_steps must be >= 1");
    if (!(c.setup.step_timeout > 0) || !(c.setup.test_timeout > 0)) throw bad("setup timeouts must be positive");
    if (c.sandbox.backend != "local" && c.sandbox.backend != "container") throw bad("sandbox.backend must be local or container");
    if (c.sandbox.parallelism < 1) throw bad("sandbox.parallelism must be >= 1");
    if (c.sandbox.network != "offline" && c.sandbox.network != "online") throw bad("sandbox.network must be offline or online");
    if (!(c.sandbox.install_timeout > 0)) throw bad("sandbox.install_timeout must be positive");
    if (c.validate.flake_repeats == 1 || c.validate.flake_repeats < 0) throw bad("validate.flake_repeats must be 0 or >= 2");
    if (!(c.expand.max_overlap >= 0 && c.expand.max_overlap <= 1)) throw bad("expand.max_overlap must be in [0, 1]");
    try {
        const auto strategy = quality::strategy_from_string(c.filter.strategy);
        (void)quality::prompt_variant_from_string(c.filter.variant);
        std::set<std::string> ids;
        for (const auto& jc : c.filter.judges) {
            if (!ids.insert(jc.id).second) throw bad("duplicate judge id " + jc.id);
            if (jc.seam.type == "builtin") throw bad("judge " + jc.id + " needs a scripted or http seam");
        }
        if (!c.filter.judges.empty()) {
            if (strategy == quality::Strategy::Single && c.filter.judges.size() != 1) {
                throw bad("filter.strategy single needs exactly one judge");
            }
            if (strategy != quality::Strategy::Single && c.filter.judges.size() < 2) {
                throw bad("filter.strategy " + c.filter.strategy + " needs at least two judges");
            }
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Schema) throw;
        throw bad(e.what());
    }
    return c;
}

json to_json(const PipelineConfig& c) {
    json judges = json::array();
    for (const auto& jc : c.filter.judges) judges.push_back({{"id", jc.id}, {"seam", to_json(jc.seam)}});
    json sandbox{{"backend", c.sandbox.backend},
                 {"parallelism", c.sandbox.parallelism},
                 {"network", c.sandbox.network},
                 {"install_timeout", c.sandbox.install_timeout},
                 {"engine", c.sandbox.engine}};
    sandbox["namespaces"] = c.sandbox.namespaces ? json(*c.sandbox.namespaces) : json(nullptr);
    return json{{"events", c.events},
                {"snapshots", c.snapshots},
                {"work_dir", c.work_dir},
                {"output", c.output},
                {"filter_policy", corpus::to_json(c.filter_policy)},
                {"setup",
                 {{"budget", c.setup.budget},
                  {"max_steps", c.setup.max_steps},
                  {"step_timeout", c.setup.step_timeout},
                  {"test_timeout", c.setup.test_timeout},
                  {"synthesizer", to_json(c.setup.synthesizer)}}},
                {"sandbox", sandbox},
                {"validate", {{"strict", c.validate.strict}, {"flake_repeats", c.validate.flake_repeats}}},
                {"filter", {{"strategy", c.filter.strategy}, {"variant", c.filter.variant}, {"judges", judges}}},
                {"enrich", {{"annotator", to_json(c.enrich.annotator)}, {"interfaces", to_json(c.enrich.interfaces)}}},
                {"expand",
                 {{"enabled", c.expand.enabled},
                  {"generator", to_json(c.expand.generator)},
                  {"max_overlap", c.expand.max_overlap}}}};
}

PipelineConfig load_config(const fs::path& file) {
    const auto j = json::parse(read_file(file), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::Schema, "config: " + file.string() + " is not valid JSON");
    return config_from_json(j, fs::absolute(file).parent_path());
}

std::string config_hash(const PipelineConfig& c) {
    auto j = to_json(c);
    j.erase("work_dir");
    j.erase("output");
    return sha256_hex(j.dump());
}

// --- stages -------------------------------------------------------------------------

std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::Mine: return "mine";
    case Stage::Setup: return "setup";
    case Stage::Validate: return "validate";
    case Stage::Filter: return "filter";
    case Stage::Enrich: return "enrich";
    case Stage::Expand: return "expand";
    case Stage::Report: return "report";
    }
    return "?";
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> s{Stage::Mine,   Stage::Setup,  Stage::Validate, Stage::Filter,
                                      Stage::Enrich, Stage::Expand, Stage::Report};
    return s;
}

Stage stage_from_string(const std::string& name) {
    for (auto s : all_stages()) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown stage: " + name);
}

std::vector<Stage> prerequisites(Stage s) {
    switch (s) {
    case Stage::Mine: return {};
    case Stage::Setup: return {Stage::Mine};
    case Stage::Validate: return {Stage::Setup};
    case Stage::Filter: return {Stage::Validate};
    case Stage::Enrich: return {Stage::Filter};
    case Stage::Expand: return {Stage::Setup};
    case Stage::Report: return {Stage::Filter};
    }
    return {};
}

json to_json(const StageManifest& m) {
    return json{{"stage", m.stage},           {"config_hash", m.config_hash}, {"inputs", m.inputs},
                {"outputs", m.outputs},       {"rejections", m.rejections},   {"notes", m.notes},
                {"resumed", m.resumed}};
}

StageManifest stage_manifest_from_json(const json& j) {
    try {
        StageManifest m;
        m.stage = j.at("stage").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.inputs = j.at("inputs").get<std::size_t>();
        m.outputs = j.at("outputs").get<std::size_t>();
        m.rejections = j.at("rejections").get<std::map<std::string, std::size_t>>();
        m.notes = j.value("notes", std::map<std::string, std::size_t>{});
        m.resumed = j.value("resumed", std::size_t{0});
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("stage manifest: ") + e.what());
    }
}

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kInstances = "instances.jsonl";
constexpr const char* kRejections = "rejections.jsonl";

/// Append-only per-record results. A record is reused only when its input
/// digest matches; a torn last line from a crash is ignored.
class Journal {
public:
    explicit Journal(fs::path file) : file_(std::move(file)) {
        fs::create_directories(file_.parent_path());
        if (!fs::exists(file_)) return;
        for (const auto& line : split_lines(read_file(file_))) {
            const auto j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("key") || !j.contains("digest")) continue;
            entries_[j["key"].get<std::string>()] = j;
        }
    }

    std::optional<json> find(const std::string& key, const std::string& digest) const {
        const auto it = entries_.find(key);
        if (it == entries_.end() || it->second["digest"] != digest) return std::nullopt;
        return it->second["result"];
    }

    void append(const std::string& key, const std::string& digest, const json& result) {
        const json rec{{"key", key}, {"digest", digest}, {"result", result}};
        std::lock_guard lock(mu_);
        std::ofstream out(file_, std::ios::app | std::ios::binary);
        out << rec.dump() << '\n';
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "cannot append to " + file_.string());
    }

private:
    fs::path file_;
    std::map<std::string, json> entries_;
    std::mutex mu_;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception stops handing out work and is rethrown after all threads join.
template <class F>
void parallel_for(std::size_t n, int workers, F&& fn) {
    const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            while (!stop) {
                const auto i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!first) first = std::current_exception();
                    stop = true;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

std::string digest_of(const std::string& config_hash, const json& input) {
    return sha256_hex(config_hash + "\n" + input.dump());
}

std::vector<json> read_ndjson(const fs::path& file) {
    std::vector<json> out;
    if (!fs::exists(file)) return out;
    for (const auto& line : split_lines(read_file(file))) {
        if (trim_ascii(line).empty()) continue;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorKind::Parse, "malformed record in " + file.string());
        out.push_back(j);
    }
    return out;
}

std::string ndjson(const std::vector<json>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

void write_traces(const fs::path& dir, const std::string& name, const ExecutionTrace& trace) {
    if (trace.commands.empty()) return;
    fs::create_directories(dir);
    write_file(dir / (name + ".ndjson"), trace_to_ndjson(trace));
}

std::string trace_name(std::string s) {
    std::replace(s.begin(), s.end(), '/', '_');
    return s;
}

json rejection(const std::string& id, const std::string& stage, const std::string& reason) {
    return json{{"instance_id", id}, {"stage", stage}, {"reason", reason}};
}

// Per-repository result of the setup stage.
struct RepoEnv {
    std::string repo;
    std::string language;
    bool verified = false;
    std::string failure;
    BaseImageSpec base;
    RepoSnapshot snapshot;
    InstallConfig config;
    logparse::ParserSpec parser;
};

RepoEnv repo_env_from_json(const json& j) {
    RepoEnv e;
    e.repo = j.at("repo").get<std::string>();
    e.language = j.at("language").get<std::string>();
    e.verified = j.at("verified").get<bool>();
    e.failure = j.value("failure", "");
    if (j.contains("base")) e.base = base_image_from_json(j["base"]);
    if (j.contains("snapshot")) e.snapshot = snapshot_from_json(j["snapshot"]);
    if (e.verified) {
        e.config = install_config_from_json(j.at("config"));
        e.parser = logparse::spec_from_json(j.at("parser"));
    }
    return e;
}

struct ValidationResult {
    bool accepted = false;
    std::string reason;  // first rejection reason
    json outcome;        // compact, deterministic summary
    std::optional<TaskInstance> instance;
};

json names(const validate::NameSet& s) { return json(std::vector<std::string>(s.begin(), s.end())); }

ValidationResult validate_candidate(const corpus::CandidateInstance& cand, const RepoEnv& env, sandbox::Sandbox& sb,
                                    const PipelineConfig& config, const fs::path& trace_dir, const std::string& origin) {
    ValidationResult r;
    const auto id = make_instance_id(cand.repo, cand.pr);
    r.outcome = json{{"instance_id", id}};

    patch::SplitPatch split;
    try {
        split = patch::split_patch(patch::parse_unified_diff(cand.diff_text));
    } catch (const Error& e) {
        r.reason = "patch_parse";
        r.outcome["accepted"] = false;
        r.outcome["reasons"] = {r.reason};
        r.outcome["detail"] = e.what();
        return r;
    }

    RepoSnapshot snap{cand.repo, cand.base_commit, cand.pr, cand.merge_time.value_or(Timestamp{})};
    EnvironmentHandle handle;
    try {
        handle = sb.build_environment(env.base, snap, env.config);
    } catch (const sandbox::BuildError& e) {
        write_traces(trace_dir, trace_name(id) + ".build", e.trace());
        r.reason = "infra:build";
    } catch (const Error& e) {
        r.reason = "infra:sandbox";
        r.outcome["detail"] = e.what();
    }
    if (!r.reason.empty()) {
        r.outcome["accepted"] = false;
        r.outcome["reasons"] = {r.reason};
        return r;
    }

    validate::DualPassOptions options;
    options.test_timeout_seconds = config.setup.test_timeout;
    options.policy.strict = config.validate.strict;
    validate::NameSet flaky;
    if (config.validate.flake_repeats >= 2) {
        const auto probe = validate::flake_probe(cand, handle, split, env.config, env.parser, sb,
                                                 config.validate.flake_repeats, options);
        flaky = probe.flaky;
        options.exclude = flaky;
    }
    const auto outcome = validate::dual_pass(cand, handle, split, env.config, env.parser, sb, options);
    write_traces(trace_dir, trace_name(id) + ".before", outcome.before_trace);
    write_traces(trace_dir, trace_name(id) + ".after", outcome.after_trace);
    const auto decision = validate::accept(outcome, options.policy);

    r.accepted = decision.accepted;
    if (!decision.reasons.empty()) r.reason = decision.reasons.front();
    r.outcome["accepted"] = decision.accepted;
    r.outcome["reasons"] = decision.reasons;
    r.outcome["f2p"] = names(outcome.sets.f2p);
    r.outcome["p2p"] = names(outcome.sets.p2p);
    r.outcome["p2f"] = names(outcome.sets.p2f);
    r.outcome["f2f"] = names(outcome.sets.f2f);
    r.outcome["flaky"] = names(flaky);
    if (outcome.infra_failure) r.outcome["infra_failure"] = *outcome.infra_failure;
    if (!r.accepted) return r;

    TaskInstance t;
    t.instance_id = id;
    t.repo = cand.repo;
    t.pr = cand.pr;
    t.language = cand.language;
    t.license_id = cand.license_id;
    t.base_commit = cand.base_commit;
    t.problem_statement = cand.problem_statement;
    t.patch = split.solution_patch;
    t.test_patch = split.test_patch;
    t.install = env.config.install;
    t.test_cmd = env.config.test_cmd;
    t.fail_to_pass.assign(outcome.sets.f2p.begin(), outcome.sets.f2p.end());
    for (const auto& n : outcome.sets.p2p) {
        if (!flaky.count(n)) t.pass_to_pass.push_back(n);
    }
    t.origin = origin;
    t.validation = "dual_pass";
    t.created_at = cand.created_at;
    t.merge_time = cand.merge_time;
    check_instance(t);
    r.instance = std::move(t);
    return r;
}

json validation_to_json(const ValidationResult& r) {
    json j{{"accepted", r.accepted}, {"reason", r.reason}, {"outcome", r.outcome}};
    if (r.instance) j["instance"] = to_json(*r.instance);
    return j;
}

ValidationResult validation_from_json(const json& j) {
    ValidationResult r;
    r.accepted = j.at("accepted").get<bool>();
    r.reason = j.at("reason").get<std::string>();
    r.outcome = j.at("outcome");
    if (j.contains("instance")) r.instance = instance_from_json(j["instance"]);
    return r;
}

} // namespace

// --- Pipeline -----------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config, Overrides overrides)
    : config_(std::move(config)), overrides_(std::move(overrides)), hash_(config_hash(config_)) {}

fs::path Pipeline::work_dir() const { return config_.resolve(config_.work_dir); }
fs::path Pipeline::output_dir() const { return config_.resolve(config_.output); }
fs::path Pipeline::stage_dir(Stage s) const { return work_dir() / std::string(to_string(s)); }

void Pipeline::reset_journal(Stage stage) const {
    fs::remove(work_dir() / "journal" / (std::string(to_string(stage)) + ".jsonl"));
}

sandbox::Sandbox& Pipeline::sandbox() {
    if (overrides_.sandbox) return *overrides_.sandbox;
    if (!sandbox_) {
        auto snapshots = std::make_shared<sandbox::DirectorySnapshotSource>(config_.resolve(config_.snapshots));
        const auto network = config_.sandbox.network == "online" ? NetworkPolicy::Online : NetworkPolicy::Offline;
        if (config_.sandbox.backend == "container") {
            sandbox::ContainerOptions o;
            o.engine = config_.sandbox.engine;
            o.workdir = work_dir() / "sandbox";
            o.network = network;
            o.install_timeout_seconds = config_.sandbox.install_timeout;
            sandbox_ = std::make_shared<sandbox::ContainerRunner>(o, snapshots);
        } else {
            sandbox::LocalOptions o;
            o.workdir = work_dir() / "sandbox";
            o.network = network;
            o.install_timeout_seconds = config_.sandbox.install_timeout;
            o.namespaces = config_.sandbox.namespaces;
            sandbox_ = std::make_shared<sandbox::LocalRunner>(o, snapshots);
        }
    }
    return *sandbox_;
}

std::shared_ptr<seam::CompletionClient> Pipeline::client(const SeamConfig& seam) {
    if (seam.type == "builtin") return nullptr;
    const auto key = seam.type == "http" ? std::string("http") : config_.resolve(seam.path).string();
    if (const auto it = overrides_.clients.find(seam.type == "http" ? "http" : seam.path); it != overrides_.clients.end()) {
        return it->second;
    }
    if (const auto it = clients_.find(key); it != clients_.end()) return it->second;
    std::shared_ptr<seam::CompletionClient> c;
    if (seam.type == "http") {
        c = seam::HttpCompletionClient::from_environment();
        if (!c) throw Error(ErrorKind::Precondition, "http seam configured but HARVEST_COMPLETION_URL is not set");
    } else {
        c = seam::ScriptedCompletionClient::from_ndjson(read_file(key));
    }
    clients_[key] = c;
    return c;
}

const corpus::Corpus& Pipeline::corpus() {
    if (!corpus_) {
        std::ifstream in(config_.resolve(config_.events), std::ios::binary);
        if (!in) throw Error(ErrorKind::Io, "cannot read events " + config_.resolve(config_.events).string());
        corpus_ = corpus::ingest_events(in);
    }
    return *corpus_;
}

StageManifest Pipeline::run(Stage stage) {
    for (auto pre : prerequisites(stage)) {
        if (!fs::exists(stage_dir(pre) / kManifest)) {
            throw Error(ErrorKind::Pipeline, fmt::format("stage {} needs the output of stage {}; run it first",
                                                         to_string(stage), to_string(pre)));
        }
    }
    StageManifest m;
    switch (stage) {
    case Stage::Mine: m = mine(); break;
    case Stage::Setup: m = setup(); break;
    case Stage::Validate: m = validate(); break;
    case Stage::Filter: m = filter(); break;
    case Stage::Enrich: m = enrich(); break;
    case Stage::Expand: m = expand(); break;
    case Stage::Report: m = report(); break;
    }
    m.stage = std::string(to_string(stage));
    m.config_hash = hash_;
    fs::create_directories(stage_dir(stage));
    auto j = to_json(m);
    j.erase("resumed");  // run-dependent, kept out of the byte-stable manifest
    write_file_atomic(stage_dir(stage) / kManifest, j.dump(2) + "\n");
    return m;
}

std::vector<StageManifest> Pipeline::run_all() {
    std::vector<StageManifest> out;
    for (auto s : all_stages()) out.push_back(run(s));
    return out;
}

StageManifest Pipeline::mine() {
    const auto& c = corpus();
    const auto result = corpus::mine(c, config_.filter_policy);
    const auto dir = stage_dir(Stage::Mine);
    fs::create_directories(dir);

    std::vector<json> candidates, rejections, ingest, stages;
    for (const auto& cand : result.candidates) candidates.push_back(corpus::to_json(cand));
    for (const auto& r : result.rejections) {
        rejections.push_back({{"instance_id", make_instance_id(r.repo, r.pr)}, {"stage", r.stage}, {"reason", r.reason}});
    }
    for (const auto& r : c.rejections) ingest.push_back({{"line", r.line}, {"reason", r.reason}});
    for (const auto& s : result.stages) {
        json kept = json::array();
        for (const auto& [repo, pr] : s.kept) kept.push_back({repo, pr});
        stages.push_back({{"name", s.name}, {"kept", kept}});
    }
    json repos = json::object();
    for (const auto& [name, d] : result.repo_decisions) {
        repos[name] = {{"keep", d.keep}, {"reason", d.reason}, {"notes", d.notes}};
    }
    write_file_atomic(dir / "candidates.jsonl", ndjson(candidates));
    write_file_atomic(dir / kRejections, ndjson(rejections));
    write_file_atomic(dir / "ingest_rejections.jsonl", ndjson(ingest));
    write_file_atomic(dir / "funnel_stages.json", json(stages).dump(2) + "\n");
    write_file_atomic(dir / "repos.json", repos.dump(2) + "\n");

    StageManifest m;
    m.inputs = c.prs.size();
    m.outputs = result.candidates.size();
    for (const auto& r : result.rejections) ++m.rejections[r.reason];
    if (!c.rejections.empty()) m.notes["malformed_events"] = c.rejections.size();
    return m;
}

StageManifest Pipeline::setup() {
    std::map<std::string, std::vector<corpus::CandidateInstance>> by_repo;
    for (const auto& j : read_ndjson(stage_dir(Stage::Mine) / "candidates.jsonl")) {
        auto cand = corpus::candidate_from_json(j);
        by_repo[cand.repo].push_back(std::move(cand));
    }
    std::vector<std::string> repos;
    for (const auto& [r, v] : by_repo) repos.push_back(r);

    Journal journal(work_dir() / "journal" / "setup.jsonl");
    const auto trace_dir = work_dir() / "traces" / "setup";
    std::vector<json> records(repos.size());
    std::atomic<std::size_t> resumed{0};
    const sandbox::DirectorySnapshotSource source(config_.resolve(config_.snapshots));

    parallel_for(repos.size(), config_.sandbox.parallelism, [&](std::size_t i) {
        const auto& repo = repos[i];
        const auto& tasks = by_repo[repo];
        json input = json::array();
        for (const auto& t : tasks) input.push_back(corpus::to_json(t));
        const auto digest = digest_of(hash_, input);
        if (auto hit = journal.find(repo, digest)) {
            records[i] = *hit;
            ++resumed;
            return;
        }

        json rec{{"repo", repo}, {"language", tasks.front().language}, {"verified", false}};
        const auto snapshot = setup::select_snapshot(tasks);
        rec["snapshot"] = to_json(snapshot);
        std::optional<BaseImageSpec> base;
        try {
            const auto where = source.location(repo, snapshot.commit);
            const auto hint = fs::exists(where) ? setup::detect_toolchain_hint(tasks.front().language, where)
                                                : std::nullopt;
            base = setup::default_registry().base_image_for(tasks.front().language, hint);
        } catch (const Error& e) {
            rec["failure"] = "unsupported_language";
            rec["detail"] = e.what();
        }
        if (base) {
            rec["base"] = to_json(*base);
            std::unique_ptr<setup::Synthesizer> synth;
            if (auto c = client(config_.setup.synthesizer)) {
                synth = std::make_unique<setup::CompletionSynthesizer>(c);
            } else {
                synth = std::make_unique<setup::HeuristicSynthesizer>();
            }
            setup::SynthesisOptions o;
            o.budget = config_.setup.budget;
            o.max_steps = config_.setup.max_steps;
            o.step_timeout_seconds = config_.setup.step_timeout;
            o.verify.test_timeout_seconds = config_.setup.test_timeout;
            const auto attempts = setup::synthesize_setup(snapshot, *base, *synth, sandbox(), o);
            json summary = json::array();
            for (const auto& a : attempts) {
                const auto name = fmt::format("{}.attempt{}", trace_name(repo), a.attempt_index);
                write_traces(trace_dir, name + ".transcript", a.transcript);
                if (a.verification) {
                    write_traces(trace_dir, name + ".install", a.verification->install_trace);
                    write_traces(trace_dir, name + ".test", a.verification->test_trace);
                }
                summary.push_back({{"attempt", a.attempt_index}, {"succeeded", a.succeeded}, {"failure", a.failure}});
                if (a.succeeded && !rec["verified"].get<bool>()) {
                    rec["verified"] = true;
                    rec["config"] = to_json(*a.config);
                    rec["parser"] = logparse::to_json(setup::infer_parser(tasks.front().language, *a.config));
                    rec["tests_found"] = a.verification ? a.verification->statuses.size() : 0;
                }
            }
            rec["attempts"] = summary;
            if (!rec["verified"].get<bool>()) {
                rec["failure"] = attempts.empty() ? std::string("no_attempts") : attempts.back().failure;
            }
        }
        journal.append(repo, digest, rec);
        records[i] = rec;
    });

    const auto dir = stage_dir(Stage::Setup);
    fs::create_directories(dir);
    write_file_atomic(dir / "environments.jsonl", ndjson(records));
    StageManifest m;
    m.inputs = repos.size();
    m.resumed = resumed;
    for (const auto& r : records) {
        if (r["verified"].get<bool>()) {
            ++m.outputs;
        } else {
            ++m.rejections["setup:" + r.value("failure", std::string("unknown"))];
        }
    }
    return m;
}

StageManifest Pipeline::validate() {
    std::vector<corpus::CandidateInstance> candidates;
    for (const auto& j : read_ndjson(stage_dir(Stage::Mine) / "candidates.jsonl")) {
        candidates.push_back(corpus::candidate_from_json(j));
    }
    std::map<std::string, RepoEnv> envs;
    std::map<std::string, json> env_json;
    for (const auto& j : read_ndjson(stage_dir(Stage::Setup) / "environments.jsonl")) {
        auto e = repo_env_from_json(j);
        env_json[e.repo] = j;
        envs[e.repo] = std::move(e);
    }

    Journal journal(work_dir() / "journal" / "validate.jsonl");
    const auto trace_dir = work_dir() / "traces" / "validate";
    std::vector<ValidationResult> results(candidates.size());
    std::atomic<std::size_t> resumed{0};

    parallel_for(candidates.size(), config_.sandbox.parallelism, [&](std::size_t i) {
        const auto& cand = candidates[i];
        const auto id = make_instance_id(cand.repo, cand.pr);
        const auto it = envs.find(cand.repo);
        if (it == envs.end() || !it->second.verified) {
            auto& r = results[i];
            r.reason = "setup:" + (it == envs.end() ? std::string("missing") : it->second.failure);
            r.outcome = {{"instance_id", id}, {"accepted", false}, {"reasons", {r.reason}}};
            return;
        }
        const auto digest = digest_of(hash_, json{corpus::to_json(cand), env_json[cand.repo]});
        if (auto hit = journal.find(id, digest)) {
            results[i] = validation_from_json(*hit);
            ++resumed;
            return;
        }
        results[i] = validate_candidate(cand, it->second, sandbox(), config_, trace_dir, origin::kIssueLinked);
        journal.append(id, digest, validation_to_json(results[i]));
    });

    std::vector<TaskInstance> accepted;
    std::vector<json> rejections, outcomes;
    StageManifest m;
    m.inputs = candidates.size();
    m.resumed = resumed;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& r = results[i];
        const auto id = make_instance_id(candidates[i].repo, candidates[i].pr);
        outcomes.push_back(r.outcome);
        if (r.accepted && r.instance) {
            accepted.push_back(*r.instance);
        } else {
            const bool setup_stage = r.reason.rfind("setup:", 0) == 0;
            rejections.push_back(setup_stage ? rejection(id, "setup", r.reason.substr(6))
                                             : rejection(id, "validate", r.reason));
            ++m.rejections[r.reason];
        }
    }
    m.outputs = accepted.size();
    const auto dir = stage_dir(Stage::Validate);
    fs::create_directories(dir);
    write_file_atomic(dir / kInstances, dataset::render_records(accepted));
    write_file_atomic(dir / kRejections, ndjson(rejections));
    write_file_atomic(dir / "outcomes.jsonl", ndjson(outcomes));
    return m;
}

StageManifest Pipeline::filter() {
    const auto instances = dataset::read_records(stage_dir(Stage::Validate) / kInstances);
    StageManifest m;
    m.inputs = instances.size();
    std::vector<TaskInstance> kept;
    std::vector<json> rejections;
    std::vector<quality::JudgeVerdict> verdicts;

    if (config_.filter.judges.empty()) {
        kept = instances;
        m.notes["no_judges"] = 1;
    } else {
        const auto strategy = quality::strategy_from_string(config_.filter.strategy);
        const auto variant = quality::prompt_variant_from_string(config_.filter.variant);
        std::vector<quality::Judge> judges;
        for (const auto& jc : config_.filter.judges) judges.push_back({jc.id, client(jc.seam)});

        Journal journal(work_dir() / "journal" / "filter.jsonl");
        std::vector<std::pair<std::size_t, std::size_t>> work;
        for (std::size_t i = 0; i < instances.size(); ++i) {
            for (std::size_t k = 0; k < judges.size(); ++k) work.emplace_back(i, k);
        }
        std::vector<quality::JudgeVerdict> scored(work.size());
        std::atomic<std::size_t> resumed{0};
        parallel_for(work.size(), config_.sandbox.parallelism, [&](std::size_t w) {
            const auto& t = instances[work[w].first];
            const auto& judge = judges[work[w].second];
            const auto key = judge.id + ":" + t.instance_id;
            const auto digest = digest_of(hash_, quality::judge_payload(t, variant));
            if (auto hit = journal.find(key, digest)) {
                scored[w] = quality::read_verdicts(hit->dump()).front();
                ++resumed;
                return;
            }
            scored[w] = quality::score_issue(t, judge, variant);
            journal.append(key, digest, json::parse(quality::verdict_line(scored[w])));
        });
        m.resumed = resumed;
        verdicts = scored;
        const auto keep = quality::apply_ensemble(verdicts, strategy, judges.front().id);
        for (const auto& t : instances) {
            if (keep.at(t.instance_id)) {
                kept.push_back(t);
            } else {
                rejections.push_back(rejection(t.instance_id, "filter", "underspecified"));
                ++m.rejections["underspecified"];
            }
        }
    }
    m.outputs = kept.size();
    std::sort(verdicts.begin(), verdicts.end(), [](const auto& a, const auto& b) {
        return std::tie(a.instance_id, a.judge_id) < std::tie(b.instance_id, b.judge_id);
    });
    std::string verdict_text;
    for (const auto& v : verdicts) verdict_text += quality::verdict_line(v) + "\n";

    const auto dir = stage_dir(Stage::Filter);
    fs::create_directories(dir);
    write_file_atomic(dir / kInstances, dataset::render_records(kept));
    write_file_atomic(dir / kRejections, ndjson(rejections));
    write_file_atomic(dir / "verdicts.jsonl", verdict_text);
    return m;
}

StageManifest Pipeline::enrich() {
    auto instances = dataset::read_records(stage_dir(Stage::Filter) / kInstances);
    std::unique_ptr<enrich::Annotator> annotator;
    if (auto c = client(config_.enrich.annotator)) {
        annotator = std::make_unique<enrich::CompletionAnnotator>(c);
    } else {
        annotator = std::make_unique<enrich::BuiltinAnnotator>();
    }
    const auto generator = client(config_.enrich.interfaces);

    Journal journal(work_dir() / "journal" / "enrich.jsonl");
    std::atomic<std::size_t> resumed{0};
    std::mutex annotate_mu;  // annotators are not required to be thread-safe
    parallel_for(instances.size(), config_.sandbox.parallelism, [&](std::size_t i) {
        auto& t = instances[i];
        const auto digest = digest_of(hash_, to_json(t));
        if (auto hit = journal.find(t.instance_id, digest)) {
            t = instance_from_json(*hit);
            ++resumed;
            return;
        }
        enrich::AnnotateResult ar;
        {
            std::lock_guard lock(annotate_mu);
            ar = enrich::annotate(t, *annotator);
        }
        if (ar.metadata) {
            t.metadata = *ar.metadata;
        } else if (std::find(t.tags.begin(), t.tags.end(), "annotation_failed") == t.tags.end()) {
            t.tags.push_back("annotation_failed");
            std::sort(t.tags.begin(), t.tags.end());
        }
        const auto split = patch::split_patch(patch::parse_unified_diff(t.patch + t.test_patch));
        t.interface_digest = enrich::extract_interfaces(split, generator, t.instance_id);
        journal.append(t.instance_id, digest, to_json(t));
    });

    StageManifest m;
    m.inputs = instances.size();
    m.outputs = instances.size();
    m.resumed = resumed;
    for (const auto& t : instances) {
        if (!t.metadata) ++m.notes["annotation_failed"];
    }
    const auto dir = stage_dir(Stage::Enrich);
    fs::create_directories(dir);
    write_file_atomic(dir / kInstances, dataset::render_records(instances));
    return m;
}

StageManifest Pipeline::expand() {
    StageManifest m;
    std::vector<TaskInstance> accepted;
    std::vector<json> rejections, statements;
    const auto dir = stage_dir(Stage::Expand);

    if (config_.expand.enabled) {
        const auto& c = corpus();
        std::map<std::string, RepoEnv> envs;
        std::map<std::string, json> env_json;
        for (const auto& j : read_ndjson(stage_dir(Stage::Setup) / "environments.jsonl")) {
            auto e = repo_env_from_json(j);
            env_json[e.repo] = j;
            envs[e.repo] = std::move(e);
        }

        struct Job {
            corpus::PullRequestRecord pr;
            const RepoEnv* env;
        };
        std::vector<Job> jobs;
        for (const auto& [repo, env] : envs) {
            const auto index = corpus::issue_index(c, repo);
            std::set<int> linked;
            std::vector<corpus::PullRequestRecord> prs;
            for (const auto& [key, pr] : c.prs) {
                if (key.first != repo) continue;
                prs.push_back(pr);
                if (!corpus::link_issue_to_pr(pr, index).empty()) linked.insert(pr.number);
            }
            for (auto& pr : expand::eligible_prs(repo, linked, prs, env.verified)) jobs.push_back({pr, &env});
        }

        const auto generator = client(config_.expand.generator);
        expand::LeakageOptions lo;
        lo.max_overlap = config_.expand.max_overlap;
        Journal journal(work_dir() / "journal" / "expand.jsonl");
        const auto trace_dir = work_dir() / "traces" / "expand";
        std::vector<json> results(jobs.size());
        std::atomic<std::size_t> resumed{0};
        std::mutex gen_mu;

        parallel_for(jobs.size(), config_.sandbox.parallelism, [&](std::size_t i) {
            const auto& pr = jobs[i].pr;
            const auto& env = *jobs[i].env;
            const auto id = make_instance_id(pr.repo, pr.number);
            const auto digest =
                digest_of(hash_, json{pr.repo, pr.number, pr.title, pr.body, pr.diff_text, pr.base_commit,
                                      env_json[pr.repo]});
            if (auto hit = journal.find(id, digest)) {
                results[i] = *hit;
                ++resumed;
                return;
            }
            const auto split = patch::split_patch(patch::parse_unified_diff(pr.diff_text));
            expand::GenerateResult g;
            {
                std::lock_guard lock(gen_mu);
                g = expand::generate_statement(pr, split, generator, lo);
            }
            json res{{"instance_id", id}, {"leakage", expand::to_json(g.leakage)}};
            if (!g.statement) {
                res["accepted"] = false;
                res["reason"] = g.skip_reason;
                res["detail"] = g.detail;
            } else {
                corpus::CandidateInstance cand;
                cand.repo = pr.repo;
                cand.pr = pr.number;
                cand.problem_statement = expand::render(*g.statement);
                cand.diff_text = pr.diff_text;
                cand.base_commit = pr.base_commit;
                cand.language = env.language;
                const auto r = c.repos.find(pr.repo);
                cand.license_id = r == c.repos.end() ? std::string() : r->second.license_id;
                cand.merge_time = pr.merge_time;
                res["statement"] = cand.problem_statement;
                auto v = validate_candidate(cand, env, sandbox(), config_, trace_dir, origin::kPrDerived);
                res["accepted"] = v.accepted;
                res["reason"] = v.reason;
                res["outcome"] = v.outcome;
                if (v.instance) res["instance"] = to_json(*v.instance);
            }
            journal.append(id, digest, res);
            results[i] = res;
        });
        m.inputs = jobs.size();
        m.resumed = resumed;
        for (const auto& r : results) {
            if (r.contains("statement")) {
                statements.push_back({{"instance_id", r["instance_id"]}, {"problem_statement", r["statement"]}});
            }
            if (r["accepted"].get<bool>()) {
                accepted.push_back(instance_from_json(r["instance"]));
            } else {
                const auto reason = r["reason"].get<std::string>();
                rejections.push_back(rejection(r["instance_id"], "expand", reason));
                ++m.rejections[reason];
            }
        }
    } else {
        m.notes["disabled"] = 1;
    }
    m.outputs = accepted.size();
    fs::create_directories(dir);
    write_file_atomic(dir / kInstances, dataset::render_records(accepted));
    write_file_atomic(dir / kRejections, ndjson(rejections));
    write_file_atomic(dir / "statements.jsonl", ndjson(statements));
    return m;
}

StageManifest Pipeline::report() {
    const bool enriched = fs::exists(stage_dir(Stage::Enrich) / kManifest);
    auto released = dataset::read_records(stage_dir(enriched ? Stage::Enrich : Stage::Filter) / kInstances);
    const auto filtered = dataset::read_records(stage_dir(Stage::Filter) / kInstances);
    std::size_t issue_linked = released.size();
    if (fs::exists(stage_dir(Stage::Expand) / kManifest)) {
        for (auto& t : dataset::read_records(stage_dir(Stage::Expand) / kInstances)) released.push_back(std::move(t));
    }

    // Manifest-level environment identity, so records stay host-independent.
    json environments = json::object();
    for (const auto& j : read_ndjson(stage_dir(Stage::Setup) / "environments.jsonl")) {
        if (!j["verified"].get<bool>()) continue;
        environments[j["repo"].get<std::string>()] = {
            {"image_ref", j["base"]["image_ref"]},
            {"toolchain_version", j["base"]["toolchain_version"]},
            {"snapshot", j["snapshot"]["commit"]},
            {"install_hash", sha256_hex(j["config"].dump())}};
    }
    dataset::emit_dataset(released, output_dir(), hash_, environments);

    // Funnel: mining stages, then validation, then issue-text filtering.
    std::vector<corpus::FunnelStageInput> stages;
    const auto fs_json = json::parse(read_file(stage_dir(Stage::Mine) / "funnel_stages.json"));
    for (const auto& s : fs_json) {
        corpus::FunnelStageInput in{s["name"].get<std::string>(), {}};
        for (const auto& k : s["kept"]) in.kept.insert({k[0].get<std::string>(), k[1].get<int>()});
        stages.push_back(std::move(in));
    }
    corpus::FunnelStageInput f2p{corpus::stage::kF2p, {}}, text{corpus::stage::kIssueText, {}};
    for (const auto& t : dataset::read_records(stage_dir(Stage::Validate) / kInstances)) f2p.kept.insert({t.repo, t.pr});
    for (const auto& t : filtered) text.kept.insert({t.repo, t.pr});
    stages.push_back(std::move(f2p));
    stages.push_back(std::move(text));
    const auto funnel = corpus::funnel_counts(stages);

    // Every mined candidate ends in exactly one disposition.
    std::map<std::string, Disposition> disp;
    for (const auto& j : read_ndjson(stage_dir(Stage::Mine) / "candidates.jsonl")) {
        const auto id = make_instance_id(j["repo"].get<std::string>(), j["pr"].get<int>());
        disp[id] = Disposition{id, "", ""};
    }
    const auto settle = [&](const std::string& id, const std::string& stage, const std::string& reason) {
        const auto it = disp.find(id);
        if (it == disp.end()) throw Error(ErrorKind::Pipeline, "disposition for unknown candidate " + id);
        if (!it->second.stage.empty()) {
            throw Error(ErrorKind::Pipeline, fmt::format("{} has two dispositions: {} and {}", id, it->second.stage, stage));
        }
        it->second.stage = stage;
        it->second.reason = reason;
    };
    for (auto s : {Stage::Validate, Stage::Filter}) {
        for (const auto& r : read_ndjson(stage_dir(s) / kRejections)) {
            settle(r["instance_id"].get<std::string>(), r["stage"].get<std::string>(), r["reason"].get<std::string>());
        }
    }
    for (const auto& t : filtered) settle(t.instance_id, "released", "");
    std::vector<json> dispositions;
    for (const auto& [id, d] : disp) {
        if (d.stage.empty()) throw Error(ErrorKind::Pipeline, "candidate " + id + " has no disposition");
        dispositions.push_back({{"instance_id", id}, {"stage", d.stage}, {"reason", d.reason}});
    }

    const auto dir = stage_dir(Stage::Report);
    fs::create_directories(dir);
    write_file_atomic(dir / "funnel.json", metrics::to_json(funnel).dump(2) + "\n");
    write_file_atomic(dir / "funnel.tex", metrics::render_funnel(funnel));
    write_file_atomic(dir / "dispositions.jsonl", ndjson(dispositions));

    StageManifest m;
    m.inputs = released.size();
    m.outputs = released.size();
    m.notes["issue_linked"] = issue_linked;
    m.notes["pr_derived"] = released.size() - issue_linked;
    for (const auto& d : dispositions) {
        if (d["stage"] != "released") ++m.rejections[d["stage"].get<std::string>() + ":" + d["reason"].get<std::string>()];
    }
    return m;
}

} // namespace harvest::pipeline
