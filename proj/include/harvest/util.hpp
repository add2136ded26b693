// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace harvest {

using Timestamp = std::chrono::sys_seconds;

/// Parses an RFC 3339 UTC timestamp ("2024-05-01T12:00:00Z", fractional
/// seconds and numeric offsets accepted). Throws Error(Parse).
Timestamp parse_rfc3339(std::string_view text);
std::string format_rfc3339(Timestamp ts);

std::string sha256_hex(std::string_view data);

/// Content hash of a directory tree: relative paths, file modes and bytes.
/// Stable across copies of the same tree.
std::string tree_hash(const std::filesystem::path& root);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
/// Write to a sibling temp file then rename into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Recursive copy that keeps symlinks and last-write times, so incremental
/// builds inside the copy see the same staleness as in the source.
void copy_tree(const std::filesystem::path& from, const std::filesystem::path& to);

std::vector<std::string> split_lines(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string to_lower_ascii(std::string_view text);
std::string trim_ascii(std::string_view text);

/// "1234567" -> "1,234,567".
std::string with_thousands(std::uint64_t value);

/// Removes ANSI CSI/OSC escape sequences. Idempotent.
std::string strip_ansi(std::string_view text);

} // namespace harvest
