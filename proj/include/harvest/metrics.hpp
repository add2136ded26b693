// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace harvest::metrics {

/// Unbiased estimator 1 - C(n-c, k) / C(n, k), product form.
/// Requires 0 <= c <= n and 1 <= k <= n; throws Error(InvalidArgument).
double pass_at_k(int n, int c, int k);

struct RunRecord {
    std::string task_id;
    int run_index = 0;
    bool resolved = false;
    std::string language;
};

class RunMatrix {
public:
    explicit RunMatrix(int default_runs = 3);

    /// Per-task override of the declared run count.
    void declare_runs(const std::string& task_id, int n_runs);
    /// Throws Error(Schema) on a duplicate (task, run) or a language change.
    void add(const RunRecord& record);

    struct Task {
        std::string language;
        int n_runs = 0;
        std::map<int, bool> runs;
        [[nodiscard]] int successes() const;
    };

    /// Checks every task has exactly n_runs records with indexes in [0, n_runs).
    void check_complete() const;
    [[nodiscard]] const std::map<std::string, Task>& tasks() const { return tasks_; }

    static RunMatrix from_ndjson(std::string_view text, int default_runs = 3);

private:
    int default_runs_;
    std::map<std::string, int> declared_;
    std::map<std::string, Task> tasks_;
};

enum class GroupBy { Overall, Language };

/// Mean pass@k per group ("overall" or language name).
std::map<std::string, double> aggregate_pass(const RunMatrix& matrix, int k, GroupBy group_by);

struct SemCi {
    double mean = 0;
    double sem = 0;
    double low = 0;
    double high = 0;
    std::size_t tasks = 0;
};

/// Normal-approximation interval over per-task pass@k values, not clipped.
/// `language` restricts to one group. Needs at least two tasks.
SemCi sem_ci(const RunMatrix& matrix, int k = 1, const std::optional<std::string>& language = std::nullopt);

struct FunnelStage {
    std::string name;
    std::uint64_t prs = 0;
    std::uint64_t repos = 0;
};

struct FunnelReport {
    std::vector<FunnelStage> stages;
};

nlohmann::json to_json(const FunnelReport& report);
FunnelReport funnel_from_json(const nlohmann::json& j);

/// One "name & 1,234 & 56 \\" row per stage.
std::string render_funnel(const FunnelReport& report);

} // namespace harvest::metrics
