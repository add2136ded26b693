// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/sandbox.hpp"
#include "harvest/patch.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fcntl.h>
#include <mutex>
#include <poll.h>
#include <random>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace harvest::sandbox {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Timestamp now_utc() {
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

std::string unique_suffix() {
    static std::atomic<unsigned> counter{0};
    static const unsigned salt = std::random_device{}();
    return fmt::format("{}-{:08x}-{}", ::getpid(), salt, counter.fetch_add(1));
}

std::string command_for(const std::vector<std::string>& argv) { return join(argv, " "); }

} // namespace

std::map<std::string, std::string> inherited_environment() {
    std::map<std::string, std::string> out;
    for (char** e = environ; e && *e; ++e) {
        const std::string kv(*e);
        const auto eq = kv.find('=');
        if (eq != std::string::npos) out.emplace(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return out;
}

CommandRecord run_process(const ProcessSpec& spec) {
    if (spec.argv.empty()) throw Error(ErrorKind::InvalidArgument, "empty argv");
    if (!(spec.timeout_seconds > 0)) throw Error(ErrorKind::InvalidArgument, "timeout must be positive");

    CommandRecord rec;
    rec.command = command_for(spec.argv);

    int out[2] = {-1, -1}, err[2] = {-1, -1}, in[2] = {-1, -1};
    if (::pipe2(out, O_CLOEXEC) != 0 || ::pipe2(err, O_CLOEXEC) != 0) {
        throw Error(ErrorKind::Sandbox, std::string("pipe: ") + std::strerror(errno));
    }
    // A socket for stdin so a child that exits early cannot SIGPIPE us.
    const bool feed = !spec.stdin_data.empty();
    if (feed && ::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in) != 0) {
        throw Error(ErrorKind::Sandbox, std::string("socketpair: ") + std::strerror(errno));
    }

    std::vector<std::string> env_strings;
    for (const auto& [k, v] : spec.env) env_strings.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (auto& s : env_strings) envp.push_back(s.data());
    envp.push_back(nullptr);
    std::vector<std::string> argv_copy = spec.argv;
    std::vector<char*> argv;
    for (auto& s : argv_copy) argv.push_back(s.data());
    argv.push_back(nullptr);
    const std::string cwd = spec.cwd.string();

    const auto t0 = Clock::now();
    rec.duration_seconds = 0;
    const pid_t pid = ::fork();
    if (pid < 0) throw Error(ErrorKind::Sandbox, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        ::setpgid(0, 0);
        int null_fd = -1;
        if (feed) {
            ::dup2(in[1], 0);
        } else {
            null_fd = ::open("/dev/null", O_RDONLY);
            ::dup2(null_fd, 0);
        }
        ::dup2(out[1], 1);
        ::dup2(err[1], 2);
        if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) _exit(127);
        ::execvpe(argv[0], argv.data(), envp.data());
        const char msg[] = "exec failed\n";
        [[maybe_unused]] auto w = ::write(2, msg, sizeof msg - 1);
        _exit(127);
    }
    ::setpgid(pid, pid);
    close_fd(out[1]);
    close_fd(err[1]);
    close_fd(in[1]);
    if (feed) ::fcntl(in[0], F_SETFL, ::fcntl(in[0], F_GETFL) | O_NONBLOCK);

    std::size_t kept = 0;
    std::size_t fed = 0;
    int status = 0;
    bool reaped = false;
    const auto deadline = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(spec.timeout_seconds));
    std::optional<Clock::time_point> drain_deadline;
    char buf[65536];

    while (out[0] >= 0 || err[0] >= 0 || !reaped) {
        if (!reaped) {
            const pid_t r = ::waitpid(pid, &status, WNOHANG);
            if (r == pid) {
                reaped = true;
                // Leftover background processes would hold the pipes open.
                ::kill(-pid, SIGKILL);
                drain_deadline = Clock::now() + std::chrono::seconds(1);
            }
        }
        const auto now = Clock::now();
        if (!reaped && now >= deadline) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            reaped = true;
            rec.timed_out = true;
            drain_deadline = Clock::now() + std::chrono::milliseconds(200);
        }
        if (drain_deadline && now >= *drain_deadline) break;

        std::vector<pollfd> fds;
        if (out[0] >= 0) fds.push_back({out[0], POLLIN, 0});
        if (err[0] >= 0) fds.push_back({err[0], POLLIN, 0});
        if (in[0] >= 0) fds.push_back({in[0], POLLOUT, 0});
        if (fds.empty()) {
            if (!reaped) ::usleep(2000);
            continue;
        }
        ::poll(fds.data(), fds.size(), reaped ? 50 : 20);
        for (const auto& p : fds) {
            if (p.revents == 0) continue;
            if (p.fd == in[0]) {
                if (p.revents & (POLLERR | POLLHUP)) {
                    close_fd(in[0]);
                    continue;
                }
                const auto n = ::send(in[0], spec.stdin_data.data() + fed, spec.stdin_data.size() - fed,
                                      MSG_NOSIGNAL | MSG_DONTWAIT);
                if (n > 0) fed += static_cast<std::size_t>(n);
                if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) close_fd(in[0]);
                if (fed == spec.stdin_data.size()) {
                    ::shutdown(in[0], SHUT_WR);
                    close_fd(in[0]);
                }
                continue;
            }
            const auto n = ::read(p.fd, buf, sizeof buf);
            if (n <= 0) {
                if (n < 0 && errno == EINTR) continue;
                if (p.fd == out[0]) close_fd(out[0]);
                else close_fd(err[0]);
                continue;
            }
            const auto len = static_cast<std::size_t>(n);
            const std::size_t room = kept < spec.output_cap ? spec.output_cap - kept : 0;
            const std::size_t take = std::min(room, len);
            if (take < len) rec.truncated = true;
            (p.fd == out[0] ? rec.stdout_text : rec.stderr_text).append(buf, take);
            kept += take;
        }
    }
    close_fd(out[0]);
    close_fd(err[0]);
    close_fd(in[0]);
    if (!reaped) ::waitpid(pid, &status, 0);

    rec.duration_seconds = seconds_since(t0);
    if (rec.timed_out) rec.exit_code = -1;
    else if (WIFEXITED(status)) rec.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) rec.exit_code = 128 + WTERMSIG(status);
    else rec.exit_code = -1;
    return rec;
}

// --- snapshots -------------------------------------------------------------------

DirectorySnapshotSource::DirectorySnapshotSource(fs::path root) : root_(std::move(root)) {}

fs::path DirectorySnapshotSource::location(const std::string& repo, const std::string& commit) const {
    std::string dir = repo;
    const auto slash = dir.find('/');
    if (slash == std::string::npos || commit.empty() || commit.find('/') != std::string::npos) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("bad snapshot reference {}@{}", repo, commit));
    }
    dir.replace(slash, 1, "__");
    return root_ / dir / commit;
}

void DirectorySnapshotSource::checkout(const std::string& repo, const std::string& commit, const fs::path& dest) {
    const auto src = location(repo, commit);
    if (!fs::is_directory(src)) {
        throw Error(ErrorKind::Precondition, fmt::format("snapshot not found: {}@{} ({})", repo, commit, src.string()));
    }
    copy_tree(src, dest);
}

// --- shared --------------------------------------------------------------------------

ExecutionTrace Sandbox::run(const EnvironmentHandle& env, const std::vector<std::string>& commands,
                            double timeout_seconds) {
    auto view = reset(env);
    return view->run(commands, timeout_seconds);
}

std::string environment_key(const BaseImageSpec& base, const RepoSnapshot& snapshot, const std::string& tree,
                            const InstallConfig& install) {
    const nlohmann::json j{{"base", to_json(base)},
                           {"repo", snapshot.repo},
                           {"commit", snapshot.commit},
                           {"tree", tree},
                           {"install", install.install}};
    return sha256_hex(j.dump()).substr(0, 32);
}

// --- local runner ---------------------------------------------------------------------

namespace {

// Runs inside fresh user+mount namespaces: the environment directory is
// bind-mounted over the fixed root so absolute paths baked in by install
// steps (virtualenvs, build caches) stay valid in every copy.
constexpr const char* kLauncher =
    "mount --bind \"$HARVEST_VIEW\" \"$HARVEST_ROOT\" || exit 125\n"
    "cd \"$HARVEST_ROOT/repo\" || exit 125\n"
    "c=$HARVEST_CMD\n"
    "unset HARVEST_VIEW HARVEST_ROOT HARVEST_CMD\n"
    "exec /bin/sh -c \"$c\"\n";

const char* const kPassThrough[] = {"PATH", "CARGO_HOME", "RUSTUP_HOME", "JAVA_HOME", "GOROOT", "LD_LIBRARY_PATH"};

} // namespace

bool namespaces_available() {
    static std::once_flag once;
    static bool available = false;
    std::call_once(once, [] {
        std::error_code ec;
        const auto base = fs::temp_directory_path(ec) / ("harvest-probe-" + unique_suffix());
        fs::create_directories(base / "a", ec);
        fs::create_directories(base / "b", ec);
        if (ec) return;
        ProcessSpec p;
        p.argv = {"unshare", "-rmn", "--", "/bin/sh", "-c", "mount --bind \"$0\" \"$1\" && test -d \"$1\"",
                  (base / "a").string(), (base / "b").string()};
        p.env = inherited_environment();
        p.timeout_seconds = 10;
        try {
            available = run_process(p).exit_code == 0;
        } catch (const Error&) {
            available = false;
        }
        fs::remove_all(base, ec);
    });
    return available;
}

namespace {

class LocalView : public View {
public:
    LocalView(const LocalRunner& runner, fs::path dir, BaseImageSpec base)
        : runner_(runner), dir_(std::move(dir)), base_(std::move(base)) {}
    ~LocalView() override {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }

    ExecutionTrace run(const std::vector<std::string>& commands, double timeout_seconds) override {
        return runner_.run_in(dir_, commands, timeout_seconds, false, base_);
    }
    std::vector<std::string> apply_patch(const std::string& patch) override {
        return patch::apply_patch(dir_ / "repo", patch);
    }
    std::string tree_hash() override { return harvest::tree_hash(dir_ / "repo"); }

private:
    const LocalRunner& runner_;
    fs::path dir_;
    BaseImageSpec base_;
};

} // namespace

LocalRunner::LocalRunner(LocalOptions options, std::shared_ptr<SnapshotSource> snapshots)
    : options_(std::move(options)), snapshots_(std::move(snapshots)) {
    if (options_.workdir.empty()) throw Error(ErrorKind::InvalidArgument, "local runner needs a workdir");
    options_.workdir = fs::absolute(options_.workdir);
    fs::create_directories(options_.workdir / "envs");
    fs::create_directories(options_.workdir / "views");
    fs::create_directories(fixed_root());
    namespaces_ = options_.namespaces.value_or(namespaces_available());
    if (namespaces_ && !namespaces_available()) {
        throw Error(ErrorKind::Sandbox, "namespace isolation requested but unavailable");
    }
}

ExecutionTrace LocalRunner::run_in(const fs::path& dir, const std::vector<std::string>& commands,
                                   double timeout_seconds, bool stop_at_failure, const BaseImageSpec& base) const {
    if (!(timeout_seconds > 0)) throw Error(ErrorKind::InvalidArgument, "timeout must be positive");
    // Builds always have network; test runs follow the policy.
    const bool offline = !stop_at_failure && options_.network == NetworkPolicy::Offline;
    const fs::path root = namespaces_ ? fixed_root() : dir;

    const auto parent = inherited_environment();
    std::map<std::string, std::string> env;
    for (const char* k : kPassThrough) {
        const auto it = parent.find(k);
        if (it != parent.end()) env[k] = it->second;
    }
    if (!env.count("PATH")) env["PATH"] = "/usr/local/bin:/usr/bin:/bin";
    env["HOME"] = (root / "home").string();
    env["TMPDIR"] = (root / "tmp").string();
    env["LANG"] = "C.UTF-8";
    for (const auto& [k, v] : base.env_defaults) env[k] = v;

    ExecutionTrace trace;
    trace.started_at = now_utc();
    for (const auto& cmd : commands) {
        ProcessSpec p;
        p.env = env;
        p.timeout_seconds = timeout_seconds;
        p.output_cap = options_.output_cap;
        if (namespaces_) {
            p.argv = {"unshare", offline ? "-rmn" : "-rm", "--", "/bin/sh", "-c", kLauncher};
            p.env["HARVEST_VIEW"] = dir.string();
            p.env["HARVEST_ROOT"] = fixed_root().string();
            p.env["HARVEST_CMD"] = cmd;
            p.cwd = dir;
        } else {
            p.argv = {"/bin/sh", "-c", cmd};
            p.cwd = dir / "repo";
        }
        auto rec = run_process(p);
        rec.command = cmd;
        trace.truncated = trace.truncated || rec.truncated;
        const bool failed = rec.exit_code != 0;
        trace.commands.push_back(std::move(rec));
        if (stop_at_failure && failed) break;
    }
    return trace;
}

EnvironmentHandle LocalRunner::build_environment(const BaseImageSpec& base, const RepoSnapshot& snapshot,
                                                 const InstallConfig& install) {
    const auto staging = options_.workdir / "envs" / (".build-" + unique_suffix());
    fs::create_directories(staging / "home");
    fs::create_directories(staging / "tmp");
    try {
        snapshots_->checkout(snapshot.repo, snapshot.commit, staging / "repo");
    } catch (...) {
        fs::remove_all(staging);
        throw;
    }
    const auto id = environment_key(base, snapshot, harvest::tree_hash(staging / "repo"), install);
    const auto final_dir = options_.workdir / "envs" / id;

    EnvironmentHandle h;
    h.id = id;
    h.base = base;
    h.network = options_.network;
    h.backend_ref = final_dir.string();
    h.repo_root = ((namespaces_ ? fixed_root() : final_dir) / "repo").string();

    if (fs::exists(final_dir / "ready")) {
        fs::remove_all(staging);
        h.cache_hit = true;
        return h;
    }

    const auto trace = run_in(staging, install.install, options_.install_timeout_seconds, true, base);
    write_file(staging / "build.ndjson", trace_to_ndjson(trace));
    if (!trace.commands.empty() && trace.commands.back().exit_code != 0) {
        const auto& last = trace.commands.back();
        fs::remove_all(staging);
        throw BuildError(fmt::format("install step failed with exit {}: {}", last.exit_code, last.command),
                         last.command, last.exit_code, trace);
    }
    fs::remove_all(staging / "tmp");
    fs::create_directories(staging / "tmp");
    write_file(staging / "ready", id + "\n");
    std::error_code ec;
    fs::rename(staging, final_dir, ec);
    if (ec) {
        // Another worker finished the same build first.
        fs::remove_all(staging);
        if (!fs::exists(final_dir / "ready")) {
            throw Error(ErrorKind::Io, fmt::format("cannot publish environment {}: {}", id, ec.message()));
        }
    }
    return h;
}

std::unique_ptr<View> LocalRunner::reset(const EnvironmentHandle& env) {
    const fs::path src = env.backend_ref;
    if (!fs::exists(src / "ready")) throw Error(ErrorKind::Precondition, "environment not built: " + env.id);
    const auto dir = options_.workdir / "views" / unique_suffix();
    fs::create_directories(dir / "tmp");
    copy_tree(src / "repo", dir / "repo");
    copy_tree(src / "home", dir / "home");
    return std::make_unique<LocalView>(*this, dir, env.base);
}

ExecutionTrace LocalRunner::build_trace(const EnvironmentHandle& env) {
    return trace_from_ndjson(read_file(fs::path(env.backend_ref) / "build.ndjson"));
}

// --- container runner ------------------------------------------------------------------

CommandRecord ProcessExecutor::exec(const std::vector<std::string>& argv, const std::string& stdin_data,
                                    double timeout_seconds) {
    ProcessSpec p;
    p.argv = argv;
    p.env = inherited_environment();
    p.stdin_data = stdin_data;
    p.timeout_seconds = timeout_seconds;
    return run_process(p);
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (const char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

// Exec-form JSON array keeps commands out of a second round of shell parsing.
std::string run_line(const std::string& cmd) {
    return "RUN " + nlohmann::json::array({"/bin/sh", "-c", cmd}).dump() + "\n";
}

bool step_cached(const std::string& output, std::size_t steps) {
    std::size_t hits = 0;
    for (const auto* marker : {"CACHED", "Using cache"}) {
        for (auto pos = output.find(marker); pos != std::string::npos; pos = output.find(marker, pos + 1)) ++hits;
    }
    return hits >= steps;
}

class ContainerView : public View {
public:
    ContainerView(std::shared_ptr<Executor> exec, std::string engine, std::string image, std::string repo_root,
                  NetworkPolicy network)
        : exec_(std::move(exec)), engine_(std::move(engine)), image_(std::move(image)),
          repo_root_(std::move(repo_root)), network_(network), tag_base_("harvest-view:" + unique_suffix()) {}

    ExecutionTrace run(const std::vector<std::string>& commands, double timeout_seconds) override {
        ExecutionTrace trace;
        trace.started_at = now_utc();
        for (const auto& cmd : commands) {
            auto rec = step(cmd, "", timeout_seconds);
            trace.truncated = trace.truncated || rec.truncated;
            trace.commands.push_back(std::move(rec));
        }
        return trace;
    }

    std::vector<std::string> apply_patch(const std::string& patch) override {
        const auto files = patch::parse_unified_diff(patch);
        auto rec = step("cat > /tmp/harvest.diff && git apply --whitespace=nowarn /tmp/harvest.diff", patch, 600);
        if (rec.exit_code != 0) throw Error(ErrorKind::Apply, "patch did not apply: " + rec.stderr_text);
        std::vector<std::string> touched;
        for (const auto& f : files) touched.push_back(f.path());
        return touched;
    }

    std::string tree_hash() override {
        const auto rec = step("find . -type f -not -path './.git/*' | LC_ALL=C sort | xargs -r sha256sum | sha256sum",
                              "", 600, false);
        return trim_ascii(rec.stdout_text);
    }

private:
    // One container per command; its filesystem is committed so the next
    // command starts where this one ended.
    CommandRecord step(const std::string& cmd, const std::string& input, double timeout_seconds, bool keep = true) {
        const auto name = "harvest-" + unique_suffix();
        std::vector<std::string> argv{engine_, "run", "--name", name, "-w", repo_root_};
        if (network_ == NetworkPolicy::Offline) argv.insert(argv.end(), {"--network", "none"});
        if (!input.empty()) argv.push_back("-i");
        argv.insert(argv.end(), {image_, "timeout", "-s", "KILL", fmt::format("{}", static_cast<long>(timeout_seconds)),
                                 "/bin/sh", "-c", cmd});
        auto rec = exec_->exec(argv, input, timeout_seconds + 60);
        if (rec.exit_code == 137 || rec.timed_out) {
            rec.timed_out = true;
            rec.exit_code = -1;
        }
        rec.command = cmd;
        if (keep) {
            const auto tag = fmt::format("{}-{}", tag_base_, ++generation_);
            const auto c = exec_->exec({engine_, "commit", name, tag}, "", 600);
            if (c.exit_code != 0) throw Error(ErrorKind::Sandbox, "commit failed: " + c.stderr_text);
            image_ = tag;
        }
        exec_->exec({engine_, "rm", "-f", name}, "", 120);
        return rec;
    }

    std::shared_ptr<Executor> exec_;
    std::string engine_;
    std::string image_;
    std::string repo_root_;
    NetworkPolicy network_;
    std::string tag_base_;
    int generation_ = 0;
};

} // namespace

ContainerRunner::ContainerRunner(ContainerOptions options, std::shared_ptr<SnapshotSource> snapshots,
                                 std::shared_ptr<Executor> executor)
    : options_(std::move(options)), snapshots_(std::move(snapshots)), executor_(std::move(executor)) {
    if (options_.workdir.empty()) throw Error(ErrorKind::InvalidArgument, "container runner needs a workdir");
}

std::string ContainerRunner::dockerfile(const BaseImageSpec& base, const InstallConfig& install) const {
    std::string df = fmt::format("FROM {} AS base\n", base.image_ref);
    for (const auto& [k, v] : base.env_defaults) df += fmt::format("ENV {}={}\n", k, shell_quote(v));
    df += "\nFROM base AS env\n";
    df += fmt::format("COPY repo/ {}/\n", options_.repo_root);
    df += fmt::format("WORKDIR {}\n", options_.repo_root);
    for (const auto& cmd : install.install) df += run_line(cmd);
    return df;
}

EnvironmentHandle ContainerRunner::build_environment(const BaseImageSpec& base, const RepoSnapshot& snapshot,
                                                     const InstallConfig& install) {
    const auto ctx = fs::absolute(options_.workdir) / "contexts" / unique_suffix();
    fs::create_directories(ctx);
    snapshots_->checkout(snapshot.repo, snapshot.commit, ctx / "repo");
    const auto id = environment_key(base, snapshot, harvest::tree_hash(ctx / "repo"), install);
    write_file(ctx / "Dockerfile", dockerfile(base, install));
    const auto tag = "harvest-env:" + id;

    const std::vector<std::string> argv{options_.engine, "build", "--progress=plain", "-t", tag, "-f",
                                        (ctx / "Dockerfile").string(), ctx.string()};
    auto rec = executor_->exec(argv, "", options_.install_timeout_seconds);
    std::error_code ec;
    fs::remove_all(ctx, ec);

    ExecutionTrace trace;
    trace.started_at = now_utc();
    trace.truncated = rec.truncated;
    const auto output = rec.stdout_text + rec.stderr_text;
    trace.commands.push_back(rec);
    if (rec.exit_code != 0) {
        // The engine reports the failing step; map it back to an install command.
        std::string failing = install.install.empty() ? "" : install.install.back();
        for (const auto& cmd : install.install) {
            if (output.find(nlohmann::json::array({"/bin/sh", "-c", cmd}).dump()) != std::string::npos ||
                output.find(cmd) != std::string::npos) {
                failing = cmd;
            }
        }
        int code = rec.exit_code;
        for (const auto* marker : {"exit code: ", "non-zero code: "}) {
            const auto pos = output.rfind(marker);
            if (pos != std::string::npos) {
                code = std::atoi(output.c_str() + pos + std::strlen(marker));
                break;
            }
        }
        throw BuildError(fmt::format("image build failed at: {}", failing), failing, code, trace);
    }

    EnvironmentHandle h;
    h.id = id;
    h.base = base;
    h.repo_root = options_.repo_root;
    h.network = options_.network;
    h.cache_hit = step_cached(output, install.install.size() + 1);
    h.backend_ref = tag;
    traces_[id] = trace;
    return h;
}

std::unique_ptr<View> ContainerRunner::reset(const EnvironmentHandle& env) {
    return std::make_unique<ContainerView>(executor_, options_.engine, env.backend_ref, options_.repo_root,
                                           env.network);
}

ExecutionTrace ContainerRunner::build_trace(const EnvironmentHandle& env) {
    const auto it = traces_.find(env.id);
    if (it == traces_.end()) throw Error(ErrorKind::Precondition, "no build trace for " + env.id);
    return it->second;
}

} // namespace harvest::sandbox
