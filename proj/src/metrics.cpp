// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/metrics.hpp"

#include "harvest/error.hpp"
#include "harvest/util.hpp"

#include <fmt/format.h>

#include <cmath>

namespace harvest::metrics {

double pass_at_k(int n, int c, int k) {
    if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("pass@k needs 0<=c<=n, 1<=k<=n (n={}, c={}, k={})", n, c, k));
    }
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;
    if (k == 1) return static_cast<double>(c) / n;
    // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
    double miss = 1.0;
    for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / i;
    return 1.0 - miss;
}

RunMatrix::RunMatrix(int default_runs) : default_runs_(default_runs) {
    if (default_runs < 1) throw Error(ErrorKind::InvalidArgument, "run count must be >= 1");
}

void RunMatrix::declare_runs(const std::string& task_id, int n_runs) {
    if (n_runs < 1) throw Error(ErrorKind::InvalidArgument, "run count must be >= 1");
    declared_[task_id] = n_runs;
    if (auto it = tasks_.find(task_id); it != tasks_.end()) it->second.n_runs = n_runs;
}

void RunMatrix::add(const RunRecord& r) {
    auto [it, fresh] = tasks_.try_emplace(r.task_id);
    Task& t = it->second;
    if (fresh) {
        t.language = r.language;
        const auto d = declared_.find(r.task_id);
        t.n_runs = d == declared_.end() ? default_runs_ : d->second;
    } else if (t.language != r.language) {
        throw Error(ErrorKind::Schema, fmt::format("task '{}' has two languages", r.task_id));
    }
    if (r.run_index < 0 || !t.runs.emplace(r.run_index, r.resolved).second) {
        throw Error(ErrorKind::Schema, fmt::format("task '{}': bad or duplicate run {}", r.task_id, r.run_index));
    }
}

int RunMatrix::Task::successes() const {
    int c = 0;
    for (const auto& [_, ok] : runs) c += ok ? 1 : 0;
    return c;
}

void RunMatrix::check_complete() const {
    for (const auto& [id, t] : tasks_) {
        const bool in_range = t.runs.empty() || t.runs.rbegin()->first < t.n_runs;
        if (static_cast<int>(t.runs.size()) != t.n_runs || !in_range) {
            throw Error(ErrorKind::Schema, fmt::format("task '{}' has {} run records, expected {}", id, t.runs.size(), t.n_runs));
        }
    }
}

RunMatrix RunMatrix::from_ndjson(std::string_view text, int default_runs) {
    RunMatrix m(default_runs);
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim_ascii(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            RunRecord r{j.at("task_id").get<std::string>(), j.at("run_index").get<int>(), j.at("resolved").get<bool>(),
                        j.value("language", std::string("unknown"))};
            if (j.contains("n_runs")) m.declare_runs(r.task_id, j["n_runs"].get<int>());
            m.add(r);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, fmt::format("run record line {}: {}", line_no, e.what()));
        }
    }
    m.check_complete();
    return m;
}

namespace {

double task_pass(const std::string& id, const RunMatrix::Task& t, int k) {
    if (k > t.n_runs) throw Error(ErrorKind::InvalidArgument, fmt::format("k={} exceeds {} runs of task '{}'", k, t.n_runs, id));
    return pass_at_k(t.n_runs, t.successes(), k);
}

} // namespace

std::map<std::string, double> aggregate_pass(const RunMatrix& matrix, int k, GroupBy group_by) {
    matrix.check_complete();
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& [id, t] : matrix.tasks()) {
        auto& [sum, count] = acc[group_by == GroupBy::Overall ? std::string("overall") : t.language];
        sum += task_pass(id, t, k);
        ++count;
    }
    std::map<std::string, double> out;
    for (const auto& [g, sc] : acc) out[g] = sc.first / sc.second;
    return out;
}

SemCi sem_ci(const RunMatrix& matrix, int k, const std::optional<std::string>& language) {
    matrix.check_complete();
    std::vector<double> xs;
    for (const auto& [id, t] : matrix.tasks()) {
        if (!language || t.language == *language) xs.push_back(task_pass(id, t, k));
    }
    if (xs.size() < 2) throw Error(ErrorKind::Precondition, "SEM needs at least two tasks");
    SemCi r;
    r.tasks = xs.size();
    const double n = static_cast<double>(xs.size());
    for (const double x : xs) r.mean += x;
    r.mean /= n;
    double ss = 0;
    for (const double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.sem = std::sqrt(ss / (n - 1)) / std::sqrt(n);
    r.low = r.mean - 1.96 * r.sem;
    r.high = r.mean + 1.96 * r.sem;
    return r;
}

nlohmann::json to_json(const FunnelReport& report) {
    auto rows = nlohmann::json::array();
    for (const auto& s : report.stages) rows.push_back({{"stage", s.name}, {"prs", s.prs}, {"repos", s.repos}});
    return rows;
}

FunnelReport funnel_from_json(const nlohmann::json& j) {
    FunnelReport r;
    try {
        for (const auto& row : j) {
            r.stages.push_back({row.at("stage").get<std::string>(), row.at("prs").get<std::uint64_t>(),
                                row.at("repos").get<std::uint64_t>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("bad funnel: ") + e.what());
    }
    return r;
}

std::string render_funnel(const FunnelReport& report) {
    std::string out;
    for (const auto& s : report.stages) {
        out += fmt::format("{} & {} & {} \\\\\n", s.name, with_thousands(s.prs), with_thousands(s.repos));
    }
    return out;
}

} // namespace harvest::metrics
