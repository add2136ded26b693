// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace harvest::patch {

struct Hunk {
    int old_start = 0;
    int old_len = 0;
    int new_start = 0;
    int new_len = 0;
    std::string header;              // the "@@ ... @@ section" line, verbatim
    std::vector<std::string> lines;  // body lines with their ' ', '+', '-' or '\' prefix
};

enum class ChangeKind { Modify, Add, Delete, Rename };

std::string_view to_string(ChangeKind kind);

struct FileDiff {
    std::string old_path;  // empty for Add
    std::string new_path;  // empty for Delete
    ChangeKind kind = ChangeKind::Modify;
    bool binary = false;
    bool new_executable = false;
    std::vector<std::string> header;   // raw header lines, verbatim
    std::vector<Hunk> hunks;
    std::vector<std::string> trailer;  // stray lines after the last hunk

    /// Path the file lives at after the change (old path for deletions).
    [[nodiscard]] const std::string& path() const { return new_path.empty() ? old_path : new_path; }
};

/// Parses a unified diff (git-style headers accepted). Throws Error(Parse)
/// with the offending line number on a malformed hunk header or body.
std::vector<FileDiff> parse_unified_diff(std::string_view text);

/// Renders diffs back to text; always ends with a single '\n' unless empty.
std::string render(const std::vector<FileDiff>& files);

/// Matches the test-file pattern (?i)(test(?:ing|s)?|e2e) anywhere in the
/// path. With `word_boundaries`, the match must additionally be delimited by
/// non-alphanumeric characters or the ends of the path.
bool is_test_path(std::string_view path, bool word_boundaries = false);

struct SplitPatch {
    std::string solution_patch;
    std::string test_patch;
    std::vector<std::string> solution_files;
    std::vector<std::string> test_files;
    std::vector<std::string> binary_files;  // routed to the solution side
};

SplitPatch split_patch(const std::vector<FileDiff>& diff, bool word_boundaries = false);

/// Applies `patch` to the tree rooted at `worktree` with exact context
/// matching (a hunk may be found at an offset from its declared line).
/// All-or-nothing: on any failure the tree is left untouched and
/// Error(Apply) names the file and hunk. Returns changed paths in patch order.
std::vector<std::string> apply_patch(const std::filesystem::path& worktree, std::string_view patch);

/// The inverse patch: applying it after `patch` restores the original tree.
std::string reverse_patch(std::string_view patch);

/// Lines added by the patch (without the '+' prefix), across all files.
std::vector<std::string> added_lines(const std::vector<FileDiff>& files);

} // namespace harvest::patch
