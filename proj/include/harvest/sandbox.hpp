// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include "harvest/environment.hpp"
#include "harvest/error.hpp"
#include "harvest/trace.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace harvest::sandbox {

inline constexpr std::size_t kDefaultOutputCap = 10u * 1024u * 1024u;

// --- processes ----------------------------------------------------------------

struct ProcessSpec {
    std::vector<std::string> argv;
    std::filesystem::path cwd;
    std::map<std::string, std::string> env;  // the complete environment
    double timeout_seconds = 60;
    std::size_t output_cap = kDefaultOutputCap;  // stdout + stderr bytes kept
    std::string stdin_data;
};

/// Runs argv in its own process group with captured output. On timeout the
/// whole group is killed and the record has timed_out set and exit_code -1.
/// A signal death maps to 128 + signal number.
CommandRecord run_process(const ProcessSpec& spec);

/// Current process environment as a map.
std::map<std::string, std::string> inherited_environment();

// --- snapshots ------------------------------------------------------------------

/// Where repository snapshots come from.
class SnapshotSource {
public:
    virtual ~SnapshotSource() = default;
    /// Materializes `repo` at `commit` into the empty directory `dest`.
    virtual void checkout(const std::string& repo, const std::string& commit, const std::filesystem::path& dest) = 0;
};

/// Snapshots stored as plain trees: <root>/<owner>__<name>/<commit>/.
class DirectorySnapshotSource : public SnapshotSource {
public:
    explicit DirectorySnapshotSource(std::filesystem::path root);
    void checkout(const std::string& repo, const std::string& commit, const std::filesystem::path& dest) override;
    [[nodiscard]] std::filesystem::path location(const std::string& repo, const std::string& commit) const;

private:
    std::filesystem::path root_;
};

// --- sandbox interface ------------------------------------------------------------

class BuildError : public Error {
public:
    BuildError(const std::string& message, std::string command, int exit_code, ExecutionTrace trace)
        : Error(ErrorKind::Sandbox, message), command_(std::move(command)), exit_code_(exit_code),
          trace_(std::move(trace)) {}
    [[nodiscard]] const std::string& command() const { return command_; }
    [[nodiscard]] int exit_code() const { return exit_code_; }
    [[nodiscard]] const ExecutionTrace& trace() const { return trace_; }

private:
    std::string command_;
    int exit_code_;
    ExecutionTrace trace_;
};

/// A disposable working copy of a built environment.
class View {
public:
    virtual ~View() = default;
    /// Runs each command independently, in order, from the repo root.
    virtual ExecutionTrace run(const std::vector<std::string>& commands, double timeout_seconds) = 0;
    /// Applies a unified diff to the repo; throws Error(Apply).
    virtual std::vector<std::string> apply_patch(const std::string& patch) = 0;
    [[nodiscard]] virtual std::string tree_hash() = 0;
};

class Sandbox {
public:
    virtual ~Sandbox() = default;

    /// Checks out the snapshot on top of the base and runs the install
    /// commands in order. Identical inputs reuse the earlier build
    /// (cache_hit). Throws BuildError at the first failing install command.
    virtual EnvironmentHandle build_environment(const BaseImageSpec& base, const RepoSnapshot& snapshot,
                                                const InstallConfig& install) = 0;

    /// A fresh view, byte-identical to the environment right after build.
    virtual std::unique_ptr<View> reset(const EnvironmentHandle& env) = 0;

    /// Convenience: commands in a fresh view that is discarded afterwards.
    ExecutionTrace run(const EnvironmentHandle& env, const std::vector<std::string>& commands, double timeout_seconds);

    /// Trace of the install commands for an environment built earlier.
    virtual ExecutionTrace build_trace(const EnvironmentHandle& env) = 0;
};

// --- local runner -------------------------------------------------------------------

struct LocalOptions {
    std::filesystem::path workdir;
    NetworkPolicy network = NetworkPolicy::Offline;
    double install_timeout_seconds = 1800;
    std::size_t output_cap = kDefaultOutputCap;
    /// Namespace isolation (fixed repo path, network cut-off). Probed when
    /// unset; without it commands run in place and offline is not enforced.
    std::optional<bool> namespaces;
};

/// Process-backed runner. Environments live in <workdir>/envs/<id>/ with the
/// repository under repo/ and a private HOME under home/. Each view is a
/// copy that is bind-mounted at <workdir>/root in its own mount namespace,
/// so every build and run sees the repository at the same absolute path.
class LocalRunner : public Sandbox {
public:
    LocalRunner(LocalOptions options, std::shared_ptr<SnapshotSource> snapshots);

    EnvironmentHandle build_environment(const BaseImageSpec& base, const RepoSnapshot& snapshot,
                                        const InstallConfig& install) override;
    std::unique_ptr<View> reset(const EnvironmentHandle& env) override;
    ExecutionTrace build_trace(const EnvironmentHandle& env) override;

    [[nodiscard]] bool namespaces() const { return namespaces_; }
    [[nodiscard]] std::filesystem::path fixed_root() const { return options_.workdir / "root"; }

    /// Runs commands with `dir` (containing repo/ and home/) as the
    /// environment root. Used by views and by the build step.
    ExecutionTrace run_in(const std::filesystem::path& dir, const std::vector<std::string>& commands,
                          double timeout_seconds, bool stop_at_failure, const BaseImageSpec& base) const;

private:
    LocalOptions options_;
    std::shared_ptr<SnapshotSource> snapshots_;
    bool namespaces_ = false;
};

/// True when `unshare -rm` can bind-mount in this process's context.
bool namespaces_available();

// --- container runner -------------------------------------------------------------

/// Executes container-engine CLI calls; injectable for tests.
class Executor {
public:
    virtual ~Executor() = default;
    virtual CommandRecord exec(const std::vector<std::string>& argv, const std::string& stdin_data,
                               double timeout_seconds) = 0;
};

class ProcessExecutor : public Executor {
public:
    CommandRecord exec(const std::vector<std::string>& argv, const std::string& stdin_data,
                       double timeout_seconds) override;
};

struct ContainerOptions {
    std::string engine = "docker";
    std::filesystem::path workdir;       // build contexts
    NetworkPolicy network = NetworkPolicy::Offline;
    std::string repo_root = "/workspace/repo";
    double install_timeout_seconds = 1800;
};

/// Container-backed runner: a multi-stage build (base stage, then repository
/// copy and install steps) tagged by content key; views are chains of
/// run + commit on that image.
class ContainerRunner : public Sandbox {
public:
    ContainerRunner(ContainerOptions options, std::shared_ptr<SnapshotSource> snapshots,
                    std::shared_ptr<Executor> executor = std::make_shared<ProcessExecutor>());

    EnvironmentHandle build_environment(const BaseImageSpec& base, const RepoSnapshot& snapshot,
                                        const InstallConfig& install) override;
    std::unique_ptr<View> reset(const EnvironmentHandle& env) override;
    ExecutionTrace build_trace(const EnvironmentHandle& env) override;

    /// Dockerfile text for an environment (exposed for inspection).
    [[nodiscard]] std::string dockerfile(const BaseImageSpec& base, const InstallConfig& install) const;

private:
    ContainerOptions options_;
    std::shared_ptr<SnapshotSource> snapshots_;
    std::shared_ptr<Executor> executor_;
    std::map<std::string, ExecutionTrace> traces_;
};

/// Content key of (base image, snapshot, snapshot tree, install commands).
std::string environment_key(const BaseImageSpec& base, const RepoSnapshot& snapshot, const std::string& tree,
                            const InstallConfig& install);

} // namespace harvest::sandbox
