// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/setup.hpp"
#include "harvest/error.hpp"
#include "harvest/metrics.hpp"

#include <boost/regex.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <set>

namespace harvest::setup {

namespace fs = std::filesystem;
using nlohmann::json;

RepoSnapshot select_snapshot(const std::vector<corpus::CandidateInstance>& tasks) {
    if (tasks.empty()) throw Error(ErrorKind::Precondition, "select_snapshot: no candidates");
    const corpus::CandidateInstance* best = nullptr;
    for (const auto& t : tasks) {
        if (t.repo != tasks.front().repo) {
            throw Error(ErrorKind::Precondition,
                        fmt::format("select_snapshot: mixed repositories {} and {}", tasks.front().repo, t.repo));
        }
        if (!t.merge_time) {
            throw Error(ErrorKind::Precondition, fmt::format("select_snapshot: {}#{} has no merge time", t.repo, t.pr));
        }
        if (!best || *t.merge_time > *best->merge_time || (*t.merge_time == *best->merge_time && t.pr > best->pr)) {
            best = &t;
        }
    }
    return RepoSnapshot{best->repo, best->base_commit, best->pr, *best->merge_time};
}

// --- base images ------------------------------------------------------------------

std::string language_key(const std::string& language) {
    const auto l = to_lower_ascii(trim_ascii(language));
    static const std::map<std::string, std::string> aliases{
        {"c++", "cpp"}, {"c#", "csharp"}, {"golang", "go"}, {"js", "javascript"}, {"ts", "typescript"},
        {"node", "javascript"}, {"python3", "python"}, {"bash", "shell"}, {"sh", "shell"}};
    const auto it = aliases.find(l);
    return it == aliases.end() ? l : it->second;
}

void BaseImageRegistry::add(BaseImageSpec spec, bool make_default) {
    const auto key = language_key(spec.language);
    auto& e = entries_[key];
    if (e.versions.empty() || make_default) e.default_version = spec.toolchain_version;
    e.versions[spec.toolchain_version] = std::move(spec);
}

std::vector<std::string> BaseImageRegistry::languages() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
}

BaseImageSpec BaseImageRegistry::base_image_for(const std::string& language,
                                                const std::optional<std::string>& hint) const {
    const auto it = entries_.find(language_key(language));
    if (it == entries_.end()) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("no base image for language '{}'; registered: {}",
                                                            language, join(languages(), ", ")));
    }
    const auto& e = it->second;
    if (hint) {
        const auto h = trim_ascii(*hint);
        const BaseImageSpec* best = nullptr;
        for (const auto& [v, spec] : e.versions) {
            const bool match = h == v || (h.size() > v.size() && h.compare(0, v.size(), v) == 0 && h[v.size()] == '.');
            if (match && (!best || v.size() > best->toolchain_version.size())) best = &spec;
        }
        if (best) return *best;
    }
    return e.versions.at(e.default_version);
}

const BaseImageRegistry& default_registry() {
    static const BaseImageRegistry reg = [] {
        BaseImageRegistry r;
        const std::map<std::string, std::string> py_env{
            {"PIP_NO_INPUT", "1"}, {"PIP_DISABLE_PIP_VERSION_CHECK", "1"}, {"PYTHONDONTWRITEBYTECODE", "1"}};
        for (const auto* v : {"3.9", "3.10", "3.11", "3.12"}) {
            r.add({"python", v, fmt::format("python:{}-slim", v), py_env}, std::string(v) == "3.11");
        }
        const std::map<std::string, std::string> jvm_env{{"MAVEN_OPTS", "-Dstyle.color=never"},
                                                         {"GRADLE_OPTS", "-Dorg.gradle.console=plain"}};
        for (const auto* v : {"11", "17", "21"}) {
            r.add({"java", v, fmt::format("eclipse-temurin:{}-jdk", v), jvm_env}, std::string(v) == "17");
        }
        r.add({"kotlin", "17", "eclipse-temurin:17-jdk", jvm_env});
        r.add({"scala", "17", "sbtscala/scala-sbt:eclipse-temurin-17.0.10_7_1.9.9_3.4.0", jvm_env});
        const std::map<std::string, std::string> go_env{{"GOTOOLCHAIN", "local"}, {"GOFLAGS", "-mod=mod"}};
        for (const auto* v : {"1.21", "1.22"}) {
            r.add({"go", v, fmt::format("golang:{}", v), go_env}, std::string(v) == "1.22");
        }
        r.add({"rust", "1", "rust:1", {{"CARGO_TERM_COLOR", "never"}}});
        const std::map<std::string, std::string> node_env{{"CI", "1"}, {"NO_COLOR", "1"}, {"npm_config_fund", "false"}};
        for (const auto* lang : {"javascript", "typescript"}) {
            for (const auto* v : {"18", "20", "22"}) {
                r.add({lang, v, fmt::format("node:{}", v), node_env}, std::string(v) == "20");
            }
        }
        r.add({"elixir", "1.16", "elixir:1.16", {{"MIX_ENV", "test"}}});
        r.add({"julia", "1.10", "julia:1.10", {{"JULIA_PKG_PRECOMPILE_AUTO", "0"}}});
        r.add({"ruby", "3.3", "ruby:3.3", {}});
        r.add({"php", "8.3", "php:8.3-cli", {}});
        r.add({"cpp", "13", "gcc:13", {}});
        r.add({"c", "13", "gcc:13", {}});
        r.add({"csharp", "8.0", "mcr.microsoft.com/dotnet/sdk:8.0", {{"DOTNET_CLI_TELEMETRY_OPTOUT", "1"}}});
        r.add({"shell", "posix", "debian:bookworm-slim", {}});
        return r;
    }();
    return reg;
}

namespace {

std::optional<std::string> read_if(const fs::path& p) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) return std::nullopt;
    return read_file(p);
}

std::optional<std::string> first_match(const std::string& text, const char* pattern) {
    boost::smatch m;
    if (boost::regex_search(text, m, boost::regex(pattern))) return m[1].str();
    return std::nullopt;
}

std::optional<std::string> tool_versions(const fs::path& repo, const std::set<std::string>& tools) {
    const auto text = read_if(repo / ".tool-versions");
    if (!text) return std::nullopt;
    for (const auto& line : split_lines(*text)) {
        const auto t = trim_ascii(line);
        const auto sp = t.find(' ');
        if (sp != std::string::npos && tools.count(t.substr(0, sp))) return trim_ascii(t.substr(sp + 1));
    }
    return std::nullopt;
}

} // namespace

std::optional<std::string> detect_toolchain_hint(const std::string& language, const fs::path& repo) {
    const auto lang = language_key(language);
    if (lang == "java" || lang == "kotlin" || lang == "scala") {
        if (const auto pom = read_if(repo / "pom.xml")) {
            if (auto v = first_match(
                    *pom, R"(<(?:maven\.compiler\.release|maven\.compiler\.source|java\.version|release)>\s*(?:1\.)?(\d+))")) {
                return v;
            }
        }
        for (const auto* name : {"build.gradle", "build.gradle.kts"}) {
            if (const auto g = read_if(repo / name)) {
                if (auto v = first_match(*g, R"(JavaLanguageVersion\.of\(\s*(\d+)\s*\))")) return v;
                if (auto v = first_match(
                        *g, R"((?:sourceCompatibility|targetCompatibility)\s*=\s*(?:JavaVersion\.VERSION_)?['"]?(?:1[._])?(\d+))")) {
                    return v;
                }
            }
        }
        return tool_versions(repo, {"java"});
    }
    if (lang == "go") {
        if (const auto mod = read_if(repo / "go.mod")) {
            if (auto v = first_match(*mod, R"((?m)^go\s+(\d+\.\d+(?:\.\d+)?)\s*$)")) return v;
        }
        return tool_versions(repo, {"golang", "go"});
    }
    if (lang == "python") {
        if (const auto pv = read_if(repo / ".python-version")) {
            const auto lines = split_lines(*pv);
            if (!lines.empty() && !trim_ascii(lines[0]).empty()) return trim_ascii(lines[0]);
        }
        return tool_versions(repo, {"python"});
    }
    if (lang == "javascript" || lang == "typescript") {
        if (const auto nvm = read_if(repo / ".nvmrc")) {
            if (auto v = first_match(*nvm, R"(^\s*v?(\d+(?:\.\d+)*))")) return v;
        }
        if (const auto pkg = read_if(repo / "package.json")) {
            const auto j = json::parse(*pkg, nullptr, false);
            if (j.is_object() && j.contains("engines") && j["engines"].is_object() && j["engines"].contains("node") &&
                j["engines"]["node"].is_string()) {
                if (auto v = first_match(j["engines"]["node"].get<std::string>(), R"((\d+(?:\.\d+)*))")) return v;
            }
        }
        return tool_versions(repo, {"nodejs", "node"});
    }
    if (lang == "rust") {
        if (const auto t = read_if(repo / "rust-toolchain.toml")) {
            if (auto v = first_match(*t, R"re(channel\s*=\s*"([^"]+)")re")) return v;
        }
        if (const auto t = read_if(repo / "rust-toolchain")) {
            if (auto v = first_match(*t, R"(^\s*(\S+))")) return v;
        }
        return tool_versions(repo, {"rust"});
    }
    if (lang == "elixir") return tool_versions(repo, {"elixir"});
    return std::nullopt;
}

// --- heuristic synthesizer ------------------------------------------------------------

namespace {

struct Rule {
    std::vector<std::string> manifests;
    InstallConfig (*make)(const std::set<std::string>& files, const std::string& dir);
};

bool has(const std::set<std::string>& files, const std::string& dir, const std::string& name) {
    return files.count(dir.empty() ? name : dir + "/" + name) > 0;
}

InstallConfig python_config(const std::set<std::string>& files, const std::string& dir) {
    InstallConfig c;
    c.install.push_back("python3 -m venv --system-site-packages \"$HOME/.venv\"");
    if (has(files, dir, "requirements.txt")) c.install.push_back("\"$HOME/.venv/bin/pip\" install -q -r requirements.txt");
    if (has(files, dir, "pyproject.toml") || has(files, dir, "setup.py") || has(files, dir, "setup.cfg")) {
        c.install.push_back("\"$HOME/.venv/bin/pip\" install -q --no-build-isolation -e .");
    }
    c.test_cmd.push_back("\"$HOME/.venv/bin/python\" -m pytest -v -rA -p no:cacheprovider --color=no");
    return c;
}

InstallConfig go_config(const std::set<std::string>&, const std::string&) {
    return InstallConfig{{"go mod download"}, {"go test ./... -v"}};
}

InstallConfig rust_config(const std::set<std::string>&, const std::string&) {
    return InstallConfig{{"cargo fetch -q"}, {"cargo test --offline --color never --verbose"}};
}

InstallConfig maven_config(const std::set<std::string>& files, const std::string& dir) {
    const std::string mvn = has(files, dir, "mvnw") ? "./mvnw" : "mvn";
    return InstallConfig{{mvn + " -q -B -DskipTests install"},
                         {mvn + " -B test -Dmaven.test.failure.ignore=true",
                          "find . -path '*/surefire-reports/*' -name 'TEST-*.xml' -exec cat {} + || true"}};
}

InstallConfig gradle_config(const std::set<std::string>& files, const std::string& dir) {
    const std::string gradle = has(files, dir, "gradlew") ? "./gradlew" : "gradle";
    return InstallConfig{{gradle + " --no-daemon -q assemble"},
                         {gradle + " --no-daemon test --continue || true",
                          "find . -path '*/test-results/*' -name '*.xml' -exec cat {} + || true"}};
}

InstallConfig mix_config(const std::set<std::string>&, const std::string&) {
    return InstallConfig{{"mix deps.get"}, {"mix test --trace"}};
}

InstallConfig node_config(const std::set<std::string>& files, const std::string& dir) {
    std::string install = "npm install --silent --no-audit --no-fund";
    if (has(files, dir, "package-lock.json")) install = "npm ci --silent --no-audit --no-fund";
    else if (has(files, dir, "yarn.lock")) install = "yarn install --frozen-lockfile --silent";
    return InstallConfig{{install}, {"npm test --silent"}};
}

InstallConfig julia_config(const std::set<std::string>&, const std::string&) {
    return InstallConfig{{"julia --project -e 'using Pkg; Pkg.instantiate()'"},
                         {"julia --project -e 'using Pkg; Pkg.test()'"}};
}

const std::vector<Rule>& rules() {
    static const std::vector<Rule> r{
        {{"go.mod"}, go_config},
        {{"Cargo.toml"}, rust_config},
        {{"pom.xml"}, maven_config},
        {{"build.gradle", "build.gradle.kts"}, gradle_config},
        {{"mix.exs"}, mix_config},
        {{"pyproject.toml", "setup.py", "setup.cfg", "requirements.txt"}, python_config},
        {{"package.json"}, node_config},
        {{"Project.toml"}, julia_config},
    };
    return r;
}

std::optional<InstallConfig> propose_in(const std::set<std::string>& files, const std::string& dir) {
    for (const auto& rule : rules()) {
        for (const auto& m : rule.manifests) {
            if (has(files, dir, m)) return rule.make(files, dir);
        }
    }
    return std::nullopt;
}

} // namespace

std::optional<InstallConfig> HeuristicSynthesizer::propose(const std::vector<std::string>& listing) {
    std::set<std::string> files;
    for (auto f : listing) {
        if (f.rfind("./", 0) == 0) f = f.substr(2);
        files.insert(f);
    }
    if (auto c = propose_in(files, "")) return c;

    // Shallowest subdirectory holding a manifest, then by name.
    std::set<std::pair<std::size_t, std::string>> dirs;
    for (const auto& f : files) {
        const auto slash = f.rfind('/');
        if (slash == std::string::npos) continue;
        const auto dir = f.substr(0, slash);
        if (dir.find("node_modules") != std::string::npos || dir.find("vendor") != std::string::npos) continue;
        dirs.insert({static_cast<std::size_t>(std::count(dir.begin(), dir.end(), '/')), dir});
    }
    for (const auto& [depth, dir] : dirs) {
        if (auto c = propose_in(files, dir)) {
            const auto cd = fmt::format("cd {} && ", dir);
            for (auto& cmd : c->install) cmd = cd + cmd;
            for (auto& cmd : c->test_cmd) cmd = cd + cmd;
            return c;
        }
    }
    return std::nullopt;
}

SetupAction HeuristicSynthesizer::next(const SetupRequest& request) {
    SetupAction a;
    if (auto c = propose(request.files)) {
        a.kind = SetupAction::Kind::Final;
        a.config = std::move(*c);
    } else {
        a.kind = SetupAction::Kind::GiveUp;
        a.note = "no recognized build manifest";
    }
    return a;
}

// --- completion synthesizer ---------------------------------------------------------

std::string clip_output(const std::string& text, std::size_t max_lines, std::size_t max_chars) {
    auto lines = split_lines(text);
    std::vector<std::string> kept;
    const std::size_t start = lines.size() > max_lines ? lines.size() - max_lines : 0;
    for (std::size_t i = start; i < lines.size(); ++i) {
        kept.push_back(lines[i].size() > max_chars ? lines[i].substr(0, max_chars) : lines[i]);
    }
    auto out = join(kept, "\n");
    if (!kept.empty()) out += "\n";
    return out;
}

CompletionSynthesizer::CompletionSynthesizer(std::shared_ptr<seam::CompletionClient> client)
    : client_(std::move(client)) {
    if (!client_) throw Error(ErrorKind::InvalidArgument, "completion synthesizer needs a client");
}

namespace {

std::optional<std::string> heredoc_body(const std::string& text) {
    boost::smatch m;
    static const boost::regex open(R"(cat\s+>\s*\S*install_config\.json\s*<<-?\s*['"]?(\w+)['"]?[^\n]*\n)");
    if (!boost::regex_search(text, m, open)) return std::nullopt;
    const auto delim = m[1].str();
    const auto body_start = static_cast<std::size_t>(m.position(std::size_t{0}) + m.length(std::size_t{0}));
    std::size_t pos = body_start;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        if (trim_ascii(text.substr(pos, eol - pos)) == delim) return text.substr(body_start, pos - body_start);
        pos = eol + 1;
    }
    return std::nullopt;
}

InstallConfig config_from_text(const std::string& body) {
    const auto j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::Seam, "install_config is not valid JSON");
    try {
        return install_config_from_json(j);
    } catch (const Error& e) {
        throw Error(ErrorKind::Seam, std::string("malformed install_config: ") + e.what());
    }
}

} // namespace

SetupAction CompletionSynthesizer::parse_response(const std::string& text) {
    SetupAction a;
    if (auto body = heredoc_body(text)) {
        a.kind = SetupAction::Kind::Final;
        a.config = config_from_text(*body);
        return a;
    }
    if (auto block = seam::fenced_block(text, {"json"}, true)) {
        a.kind = SetupAction::Kind::Final;
        a.config = config_from_text(*block);
        return a;
    }
    if (auto block = seam::fenced_block(text, {"bash", "sh", "shell", "console", ""})) {
        const auto cmd = trim_ascii(*block);
        if (!cmd.empty() && cmd != "submit") {
            a.kind = SetupAction::Kind::Run;
            a.command = cmd;
            return a;
        }
    }
    a.kind = SetupAction::Kind::GiveUp;
    a.note = trim_ascii(text).substr(0, 200);
    return a;
}

SetupAction CompletionSynthesizer::next(const SetupRequest& request) {
    json transcript = json::array();
    for (const auto& s : request.transcript) {
        transcript.push_back({{"command", s.command}, {"exit_code", s.exit_code}, {"output", s.output}});
    }
    const json payload{{"repo", request.snapshot.repo},  {"commit", request.snapshot.commit},
                       {"language", request.language},   {"image_ref", request.image_ref},
                       {"files", request.files},         {"transcript", transcript},
                       {"attempt", request.attempt}};
    const auto key = fmt::format("{}@{}#{}", request.snapshot.repo, request.snapshot.commit, request.attempt);
    return parse_response(client_->complete({"setup", key, payload}));
}

// --- verification ---------------------------------------------------------------------

bool is_compiled_language(const std::string& language) {
    static const std::set<std::string> compiled{"go",    "rust",  "java",    "kotlin", "scala", "c",     "cpp",
                                                "csharp", "swift", "haskell", "ocaml",  "zig",   "elixir", "dart"};
    return compiled.count(language_key(language)) > 0;
}

bool is_rebuild_command(const std::string& command) {
    static const boost::regex re(
        R"((?:^|[\s;&|(])(?:go\s+(?:build|test|vet|install)|cargo\s+(?:build|test|check)|\S*mvnw?\s+.*\b(?:compile|test|package|install|verify)\b|\S*gradlew?\s+.*\b(?:build|assemble|test|classes|testClasses)\b|make\b|cmake\s+--build|ninja\b|dotnet\s+(?:build|test)|mix\s+(?:compile|test)|sbt\b|swift\s+(?:build|test)|stack\s+(?:build|test)|cabal\s+(?:build|test)|dune\s+(?:build|test)|zig\s+build|dart\s+test|flutter\s+test))");
    return boost::regex_search(command, re);
}

logparse::ParserSpec infer_parser(const std::string& language, const InstallConfig& config) {
    const auto all = join(config.test_cmd, "\n");
    const auto pick = [](const char* id) { return logparse::builtin_parser(id); };
    // Word-start match: "cargo test" must not read as "go test".
    const auto has = [&](const std::string& word) {
        for (auto pos = all.find(word); pos != std::string::npos; pos = all.find(word, pos + 1)) {
            if (pos == 0 || !(std::isalnum(static_cast<unsigned char>(all[pos - 1])) || all[pos - 1] == '_')) return true;
        }
        return false;
    };
    if (has("go test")) return pick("gotest");
    if (has("mix test")) return pick("exunit");
    if (all.find("pytest") != std::string::npos) return pick("pytest");
    if (has("cargo test")) return pick("cargo");
    if (all.find("unittest") != std::string::npos) return pick("unittest");
    if (has("ctest")) return pick("ctest");
    if (all.find(".xml") != std::string::npos || all.find("junit") != std::string::npos) return pick("junit_xml");
    if (has("node --test") || has("tap")) return pick("tap");
    const auto lang = language_key(language);
    if (lang == "python") return pick("pytest");
    if (lang == "go") return pick("gotest");
    if (lang == "rust") return pick("cargo");
    if (lang == "elixir") return pick("exunit");
    if (lang == "javascript" || lang == "typescript") return pick("tap");
    return pick("junit_xml");
}

VerifyResult verify_setup(const InstallConfig& config, const RepoSnapshot& snapshot, const BaseImageSpec& base,
                          sandbox::Sandbox& sandbox, const VerifyOptions& options) {
    VerifyResult r;
    const auto fail = [&](const char* category, std::string detail) {
        r.verified = false;
        r.failure = category;
        r.detail = std::move(detail);
        return r;
    };
    if (config.install.empty() || config.test_cmd.empty()) {
        return fail(failure::kMalformed, "install and test_cmd must both be non-empty");
    }
    if (is_compiled_language(base.language) && !is_rebuild_command(config.test_cmd.front())) {
        return fail(failure::kNoRebuild, "first test command does not rebuild: " + config.test_cmd.front());
    }
    try {
        r.env = sandbox.build_environment(base, snapshot, config);
    } catch (const sandbox::BuildError& e) {
        r.install_trace = e.trace();
        return fail(failure::kInstall, fmt::format("exit {} from: {}", e.exit_code(), e.command()));
    }
    r.install_trace = sandbox.build_trace(*r.env);
    r.test_trace = sandbox.run(*r.env, config.test_cmd, options.test_timeout_seconds);
    for (const auto& c : r.test_trace.commands) {
        if (c.timed_out) return fail(failure::kTimeout, "timed out: " + c.command);
        if (c.exit_code == 127) return fail(failure::kMissingRunner, "command not found: " + c.command);
    }
    const auto parser = options.parser ? *options.parser : infer_parser(base.language, config);
    r.statuses = logparse::apply_parser(parser, r.test_trace);
    if (r.statuses.empty()) return fail(failure::kNoParsedTests, "parser " + parser.id + " found no test names");
    r.verified = true;
    return r;
}

// --- synthesis loop ----------------------------------------------------------------------

namespace {

std::vector<std::string> list_files(sandbox::View& view, std::size_t cap) {
    const auto t = view.run({"find . -path ./.git -prune -o -type f -print | LC_ALL=C sort"}, 120);
    std::vector<std::string> files;
    if (t.commands.empty()) return files;
    for (auto line : split_lines(t.commands[0].stdout_text)) {
        if (line.rfind("./", 0) == 0) line = line.substr(2);
        if (line.empty()) continue;
        if (files.size() == cap) break;
        files.push_back(line);
    }
    return files;
}

} // namespace

std::vector<SetupAttemptResult> synthesize_setup(const RepoSnapshot& snapshot, const BaseImageSpec& base,
                                                 Synthesizer& synthesizer, sandbox::Sandbox& sandbox,
                                                 const SynthesisOptions& options) {
    if (options.budget < 1) throw Error(ErrorKind::InvalidArgument, "setup budget must be at least 1");
    const auto bare = sandbox.build_environment(base, snapshot, InstallConfig{});

    std::vector<SetupAttemptResult> results;
    for (int attempt = 1; attempt <= options.budget; ++attempt) {
        SetupAttemptResult res;
        res.attempt_index = attempt;
        auto view = sandbox.reset(bare);
        SetupRequest req;
        req.snapshot = snapshot;
        req.language = base.language;
        req.image_ref = base.image_ref;
        req.attempt = attempt;
        req.files = list_files(*view, options.max_listed_files);
        res.transcript.started_at =
            std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());

        bool done = false;
        for (int step = 0; step < options.max_steps && !done; ++step) {
            SetupAction action;
            try {
                action = synthesizer.next(req);
            } catch (const Error& e) {
                res.failure = failure::kSeam;
                res.detail = e.what();
                break;
            }
            switch (action.kind) {
            case SetupAction::Kind::Run: {
                auto t = view->run({action.command}, options.step_timeout_seconds);
                auto& rec = t.commands.front();
                req.transcript.push_back({rec.command, rec.exit_code,
                                          clip_output(t.combined_output())});
                res.transcript.truncated = res.transcript.truncated || rec.truncated;
                res.transcript.commands.push_back(std::move(rec));
                break;
            }
            case SetupAction::Kind::Final: {
                done = true;
                auto v = verify_setup(action.config, snapshot, base, sandbox, options.verify);
                if (v.verified) {
                    res.succeeded = true;
                    res.config = action.config;
                } else {
                    res.failure = v.failure;
                    res.detail = v.detail;
                }
                res.verification = std::move(v);
                break;
            }
            case SetupAction::Kind::GiveUp:
                done = true;
                res.failure = failure::kGaveUp;
                res.detail = action.note;
                break;
            }
        }
        if (!done && res.failure.empty()) {
            res.failure = failure::kStepLimit;
            res.detail = fmt::format("no final config after {} steps", options.max_steps);
        }
        const bool ok = res.succeeded;
        results.push_back(std::move(res));
        if (ok) break;
    }
    return results;
}

double setup_pass_at_k(const std::vector<std::vector<bool>>& attempt_outcomes, int k) {
    if (attempt_outcomes.empty()) throw Error(ErrorKind::InvalidArgument, "setup_pass_at_k: no repositories");
    double sum = 0;
    for (std::size_t i = 0; i < attempt_outcomes.size(); ++i) {
        const auto& runs = attempt_outcomes[i];
        const int n = static_cast<int>(runs.size());
        if (k < 1 || k > n) {
            throw Error(ErrorKind::InvalidArgument,
                        fmt::format("setup_pass_at_k: repository {} has {} attempts, k = {}", i, n, k));
        }
        const int c = static_cast<int>(std::count(runs.begin(), runs.end(), true));
        sum += metrics::pass_at_k(n, c, k);
    }
    return sum / static_cast<double>(attempt_outcomes.size());
}

json to_json(const SetupAttemptResult& r) {
    json commands = json::array();
    for (const auto& c : r.transcript.commands) {
        commands.push_back({{"command", c.command}, {"exit_code", c.exit_code}, {"timed_out", c.timed_out}});
    }
    json j{{"attempt_index", r.attempt_index},
           {"succeeded", r.succeeded},
           {"failure", r.failure},
           {"detail", r.detail},
           {"commands", commands}};
    if (r.config) j["config"] = to_json(*r.config);
    if (r.verification) j["tests_parsed"] = r.verification->statuses.size();
    return j;
}

} // namespace harvest::setup
