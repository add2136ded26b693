// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/corpus.hpp"
#include "harvest/environment.hpp"
#include "harvest/logparse.hpp"
#include "harvest/sandbox.hpp"
#include "harvest/seam.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace harvest::setup {

/// Base commit of the latest candidate by merge time; ties go to the larger
/// PR number. Throws Error(Precondition) on an empty set, a candidate without
/// merge_time, or candidates from more than one repository.
RepoSnapshot select_snapshot(const std::vector<corpus::CandidateInstance>& tasks);

// --- base images ---------------------------------------------------------------

class BaseImageRegistry {
public:
    /// Registers a spec under its (language, toolchain_version); the first
    /// spec of a language, or one registered with `make_default`, is the
    /// language default.
    void add(BaseImageSpec spec, bool make_default = false);

    /// Language names are matched case-insensitively ("C++" and "cpp" are
    /// the same). A hint picks the version whose dotted components prefix
    /// the hint ("1.21.3" -> "1.21"); an unmatched hint falls back to the
    /// default. Throws Error(InvalidArgument) listing the known languages.
    [[nodiscard]] BaseImageSpec base_image_for(const std::string& language,
                                               const std::optional<std::string>& hint = std::nullopt) const;

    [[nodiscard]] std::vector<std::string> languages() const;

private:
    struct Entry {
        std::string default_version;
        std::map<std::string, BaseImageSpec> versions;
    };
    std::map<std::string, Entry> entries_;
};

/// Registry shipped with the library (python, java 11/17/21, go, rust,
/// javascript, typescript, elixir, julia, ruby, php, cpp, c, csharp, kotlin,
/// scala, shell).
const BaseImageRegistry& default_registry();

/// Canonical registry key for a language name ("C++" -> "cpp").
std::string language_key(const std::string& language);

/// Declared toolchain version read from the repository's manifest files
/// (pom.xml, build.gradle, go.mod, .python-version, .nvmrc, package.json
/// engines, rust-toolchain, .tool-versions).
std::optional<std::string> detect_toolchain_hint(const std::string& language, const std::filesystem::path& repo);

// --- synthesizer seam ---------------------------------------------------------------

struct TranscriptStep {
    std::string command;
    int exit_code = 0;
    std::string output;  // clipped for the synthesizer
};

struct SetupRequest {
    RepoSnapshot snapshot;
    std::string language;
    std::string image_ref;
    std::vector<std::string> files;  // snapshot listing, sorted, capped
    std::vector<TranscriptStep> transcript;
    int attempt = 1;
};

struct SetupAction {
    enum class Kind { Run, Final, GiveUp };
    Kind kind = Kind::GiveUp;
    std::string command;    // Run
    InstallConfig config;   // Final
    std::string note;       // GiveUp
};

class Synthesizer {
public:
    virtual ~Synthesizer() = default;
    /// Next step of an attempt. Throws Error(Seam) on transport failure or
    /// an unusable response. Must be safe to call from several jobs.
    virtual SetupAction next(const SetupRequest& request) = 0;
};

/// Manifest-driven rules, no model: a Python manifest gives an editable
/// install into a private virtualenv and a verbose pytest run with the
/// cache plugin off; go.mod gives module download and `go test ./... -v`;
/// Cargo.toml gives fetch and a verbose `cargo test`; Maven or Gradle
/// builds run the test task and print the XML reports; package.json gives
/// a lockfile-aware install and `npm test`; mix.exs gives deps.get and
/// `mix test --trace`. A manifest found only in one subdirectory is used
/// with a leading `cd`.
class HeuristicSynthesizer : public Synthesizer {
public:
    SetupAction next(const SetupRequest& request) override;
    /// The config the rules produce for a file listing, if any rule fires.
    static std::optional<InstallConfig> propose(const std::vector<std::string>& files);
};

/// Talks to a completion service in the command / heredoc protocol: a
/// response carrying an install_config JSON object (fenced json block or a
/// `cat > install_config.json` heredoc) is final, otherwise the first
/// fenced shell block is the next command. Transcript output is clipped to
/// 64 lines of 500 characters before it is sent.
class CompletionSynthesizer : public Synthesizer {
public:
    explicit CompletionSynthesizer(std::shared_ptr<seam::CompletionClient> client);
    SetupAction next(const SetupRequest& request) override;

    static SetupAction parse_response(const std::string& text);

private:
    std::shared_ptr<seam::CompletionClient> client_;
};

/// Clips text to at most `max_lines` lines of `max_chars` characters,
/// keeping the tail.
std::string clip_output(const std::string& text, std::size_t max_lines = 64, std::size_t max_chars = 500);

// --- verification -------------------------------------------------------------------

namespace failure {
inline constexpr const char* kMalformed = "malformed_config";
inline constexpr const char* kNoRebuild = "no_rebuild";
inline constexpr const char* kInstall = "install";
inline constexpr const char* kMissingRunner = "missing_runner";
inline constexpr const char* kTimeout = "timeout";
inline constexpr const char* kNoParsedTests = "no_parsed_tests";
inline constexpr const char* kSeam = "seam";
inline constexpr const char* kGaveUp = "gave_up";
inline constexpr const char* kStepLimit = "step_limit";
} // namespace failure

/// Languages whose test_cmd must start with a rebuild step.
bool is_compiled_language(const std::string& language);
/// Whether a command (re)builds the project; test runners that compile
/// first (`go test`, `cargo test`, `mvn test`, `mix test`, ...) count.
bool is_rebuild_command(const std::string& command);

/// Parser matched to the test command, e.g. `go test` -> gotest, pytest ->
/// pytest, a JUnit XML report dump -> junit_xml.
logparse::ParserSpec infer_parser(const std::string& language, const InstallConfig& config);

struct VerifyOptions {
    double test_timeout_seconds = 3600;
    std::optional<logparse::ParserSpec> parser;  // inferred when unset
};

struct VerifyResult {
    bool verified = false;
    std::string failure;  // one of failure::*, empty when verified
    std::string detail;
    logparse::TestStatusMap statuses;
    ExecutionTrace install_trace;
    ExecutionTrace test_trace;
    std::optional<EnvironmentHandle> env;
};

/// Builds a fresh environment with the config and runs the full test suite
/// once; verified iff every install command exits 0, the test commands run
/// (no timeout, runner present) and the parser names at least one test.
VerifyResult verify_setup(const InstallConfig& config, const RepoSnapshot& snapshot, const BaseImageSpec& base,
                          sandbox::Sandbox& sandbox, const VerifyOptions& options = {});

// --- synthesis loop -------------------------------------------------------------------

struct SetupAttemptResult {
    int attempt_index = 1;
    bool succeeded = false;
    std::optional<InstallConfig> config;  // present iff succeeded
    ExecutionTrace transcript;            // commands run by the synthesizer
    std::string failure;                  // failure::* when not succeeded
    std::string detail;
    std::optional<VerifyResult> verification;
};

struct SynthesisOptions {
    int budget = 1;
    int max_steps = 40;
    double step_timeout_seconds = 1800;
    std::size_t max_listed_files = 400;
    VerifyOptions verify;
};

/// Up to `budget` independent attempts, each in a fresh view of the bare
/// snapshot environment; stops at the first attempt whose final config
/// passes verify_setup.
std::vector<SetupAttemptResult> synthesize_setup(const RepoSnapshot& snapshot, const BaseImageSpec& base,
                                                 Synthesizer& synthesizer, sandbox::Sandbox& sandbox,
                                                 const SynthesisOptions& options = {});

/// Mean over repositories of the unbiased pass@k of their attempt outcomes.
/// Throws Error(InvalidArgument) when a repository has fewer than k attempts.
double setup_pass_at_k(const std::vector<std::vector<bool>>& attempt_outcomes, int k);

nlohmann::json to_json(const SetupAttemptResult& r);

} // namespace harvest::setup
