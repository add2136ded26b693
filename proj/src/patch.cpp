// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/patch.hpp"

#include "harvest/error.hpp"
#include "harvest/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <set>

namespace fs = std::filesystem;

namespace harvest::patch {

std::string_view to_string(ChangeKind kind) {
    switch (kind) {
    case ChangeKind::Modify: return "modify";
    case ChangeKind::Add: return "add";
    case ChangeKind::Delete: return "delete";
    case ChangeKind::Rename: return "rename";
    }
    return "modify";
}

namespace {

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

[[noreturn]] void parse_error(std::size_t line_index, const std::string& what) {
    throw Error(ErrorKind::Parse, fmt::format("diff line {}: {}", line_index + 1, what));
}

// "--- a/src/x.c\t2020-01-01" -> "src/x.c"; "/dev/null" -> "".
std::string header_path(std::string_view raw) {
    auto tab = raw.find('\t');
    if (tab != std::string_view::npos) raw = raw.substr(0, tab);
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') raw = raw.substr(1, raw.size() - 2);
    if (raw == "/dev/null") return {};
    if (starts_with(raw, "a/") || starts_with(raw, "b/")) raw.remove_prefix(2);
    return std::string(raw);
}

// Split "a/X b/Y" from a `diff --git` line, preferring the split with X == Y.
std::pair<std::string, std::string> git_line_paths(std::string_view rest) {
    if (!starts_with(rest, "a/")) return {};
    std::vector<std::size_t> cuts;
    for (auto pos = rest.find(" b/"); pos != std::string_view::npos; pos = rest.find(" b/", pos + 1)) cuts.push_back(pos);
    if (cuts.empty()) return {};
    for (auto cut : cuts) {
        auto a = rest.substr(2, cut - 2);
        auto b = rest.substr(cut + 3);
        if (a == b) return {std::string(a), std::string(b)};
    }
    return {std::string(rest.substr(2, cuts.front() - 2)), std::string(rest.substr(cuts.front() + 3))};
}

bool parse_int(std::string_view text, std::size_t& pos, int& out) {
    const auto* begin = text.data() + pos;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr == begin) return false;
    pos += static_cast<std::size_t>(ptr - begin);
    return true;
}

bool parse_hunk_header(std::string_view line, Hunk& hunk) {
    std::size_t pos = 0;
    if (!starts_with(line, "@@ -")) return false;
    pos = 4;
    if (!parse_int(line, pos, hunk.old_start)) return false;
    hunk.old_len = 1;
    if (pos < line.size() && line[pos] == ',') {
        ++pos;
        if (!parse_int(line, pos, hunk.old_len)) return false;
    }
    if (line.substr(pos, 2) != " +") return false;
    pos += 2;
    if (!parse_int(line, pos, hunk.new_start)) return false;
    hunk.new_len = 1;
    if (pos < line.size() && line[pos] == ',') {
        ++pos;
        if (!parse_int(line, pos, hunk.new_len)) return false;
    }
    if (line.substr(pos, 3) != " @@") return false;
    if (hunk.old_start < 0 || hunk.new_start < 0 || hunk.old_len < 0 || hunk.new_len < 0) return false;
    hunk.header = std::string(line);
    return true;
}

bool is_mode_exec(std::string_view mode_line) {
    return mode_line.size() >= 3 && mode_line.substr(mode_line.size() - 3) == "755";
}

} // namespace

std::vector<FileDiff> parse_unified_diff(std::string_view text) {
    const auto lines = split_lines(text);
    const auto n = lines.size();
    const auto file_start = [&](std::size_t i) {
        return starts_with(lines[i], "diff ") ||
               (starts_with(lines[i], "--- ") && i + 1 < n && starts_with(lines[i + 1], "+++ "));
    };

    std::vector<FileDiff> files;
    std::size_t i = 0;
    while (i < n) {
        if (!file_start(i)) {
            ++i;  // preamble (commit message, format-patch headers)
            continue;
        }
        FileDiff f;
        bool saw_old = false, saw_new = false, saw_rename = false, new_file = false, deleted = false;
        if (starts_with(lines[i], "diff ")) {
            f.header.push_back(lines[i]);
            if (starts_with(lines[i], "diff --git ")) {
                std::tie(f.old_path, f.new_path) = git_line_paths(std::string_view(lines[i]).substr(11));
            }
            ++i;
        }
        while (i < n && !starts_with(lines[i], "@@") && !starts_with(lines[i], "diff ")) {
            const std::string_view l = lines[i];
            if (starts_with(l, "--- ")) {
                if (saw_old) break;
                saw_old = true;
                f.old_path = header_path(l.substr(4));
                if (f.old_path.empty()) new_file = true;
            } else if (starts_with(l, "+++ ")) {
                saw_new = true;
                f.new_path = header_path(l.substr(4));
                if (f.new_path.empty()) deleted = true;
                f.header.emplace_back(l);
                ++i;
                break;
            } else if (starts_with(l, "new file mode")) {
                new_file = true;
                f.new_executable = is_mode_exec(l);
            } else if (starts_with(l, "deleted file mode")) {
                deleted = true;
            } else if (starts_with(l, "new mode")) {
                f.new_executable = is_mode_exec(l);
            } else if (starts_with(l, "rename from ")) {
                saw_rename = true;
                f.old_path = std::string(l.substr(12));
            } else if (starts_with(l, "rename to ")) {
                saw_rename = true;
                f.new_path = std::string(l.substr(10));
            } else if (starts_with(l, "Binary files ") || starts_with(l, "GIT binary patch")) {
                f.binary = true;
            }
            f.header.emplace_back(l);
            ++i;
        }
        (void)saw_new;

        while (i < n && starts_with(lines[i], "@@")) {
            Hunk h;
            if (!parse_hunk_header(lines[i], h)) parse_error(i, fmt::format("malformed hunk header '{}'", lines[i]));
            ++i;
            int old_rem = h.old_len, new_rem = h.new_len;
            while (old_rem > 0 || new_rem > 0) {
                if (i >= n) parse_error(i, "truncated hunk");
                const auto& l = lines[i];
                const char c = l.empty() ? ' ' : l[0];
                switch (c) {
                case ' ':
                    if (old_rem == 0 || new_rem == 0) parse_error(i, "context line exceeds hunk length");
                    --old_rem;
                    --new_rem;
                    break;
                case '-':
                    if (old_rem == 0) parse_error(i, "removed line exceeds hunk length");
                    --old_rem;
                    break;
                case '+':
                    if (new_rem == 0) parse_error(i, "added line exceeds hunk length");
                    --new_rem;
                    break;
                case '\\':
                    break;
                default:
                    parse_error(i, fmt::format("unexpected line in hunk '{}'", l));
                }
                h.lines.push_back(l);
                ++i;
            }
            if (i < n && starts_with(lines[i], "\\")) h.lines.push_back(lines[i++]);
            f.hunks.push_back(std::move(h));
        }
        while (i < n && !file_start(i) && !starts_with(lines[i], "@@")) f.trailer.push_back(lines[i++]);
        if (i < n && starts_with(lines[i], "@@")) parse_error(i, "hunk outside of a file section");

        if (deleted) {
            f.kind = ChangeKind::Delete;
            f.new_path.clear();
        } else if (new_file) {
            f.kind = ChangeKind::Add;
            f.old_path.clear();
        } else if (saw_rename || (!f.old_path.empty() && !f.new_path.empty() && f.old_path != f.new_path)) {
            f.kind = ChangeKind::Rename;
        }
        if (f.path().empty()) parse_error(i == 0 ? 0 : i - 1, "file section without a path");
        files.push_back(std::move(f));
    }
    return files;
}

std::string render(const std::vector<FileDiff>& files) {
    std::string out;
    const auto emit = [&](const std::string& line) {
        out += line;
        out += '\n';
    };
    for (const auto& f : files) {
        for (const auto& l : f.header) emit(l);
        for (const auto& h : f.hunks) {
            emit(h.header);
            for (const auto& l : h.lines) emit(l);
        }
        for (const auto& l : f.trailer) emit(l);
    }
    return out;
}

bool is_test_path(std::string_view path, bool word_boundaries) {
    const auto lower = to_lower_ascii(path);
    if (!word_boundaries) {
        return lower.find("test") != std::string::npos || lower.find("e2e") != std::string::npos;
    }
    const auto alnum = [&](std::size_t i) { return std::isalnum(static_cast<unsigned char>(lower[i])) != 0; };
    static constexpr std::string_view kAlternatives[] = {"testing", "tests", "test", "e2e"};
    for (std::size_t i = 0; i < lower.size(); ++i) {
        if (i > 0 && alnum(i - 1)) continue;
        for (auto alt : kAlternatives) {
            if (std::string_view(lower).substr(i, alt.size()) != alt) continue;
            const auto end = i + alt.size();
            if (end == lower.size() || !alnum(end)) return true;
        }
    }
    return false;
}

SplitPatch split_patch(const std::vector<FileDiff>& diff, bool word_boundaries) {
    std::vector<FileDiff> solution, tests;
    SplitPatch split;
    for (const auto& f : diff) {
        if (f.binary) {
            split.binary_files.push_back(f.path());
            split.solution_files.push_back(f.path());
            solution.push_back(f);
            continue;
        }
        const bool test = (!f.new_path.empty() && is_test_path(f.new_path, word_boundaries)) ||
                          (!f.old_path.empty() && is_test_path(f.old_path, word_boundaries));
        (test ? split.test_files : split.solution_files).push_back(f.path());
        (test ? tests : solution).push_back(f);
    }
    split.solution_patch = render(solution);
    split.test_patch = render(tests);
    return split;
}

std::vector<std::string> added_lines(const std::vector<FileDiff>& files) {
    std::vector<std::string> out;
    for (const auto& f : files) {
        for (const auto& h : f.hunks) {
            for (const auto& l : h.lines) {
                if (!l.empty() && l[0] == '+') out.push_back(l.substr(1));
            }
        }
    }
    return out;
}

namespace {

struct TextFile {
    std::vector<std::string> lines;
    bool final_newline = true;
};

TextFile to_text(const std::string& content) {
    TextFile t;
    t.lines = split_lines(content);
    t.final_newline = content.empty() || content.back() == '\n';
    return t;
}

std::string from_text(const TextFile& t) {
    std::string out = join(t.lines, "\n");
    if (!t.lines.empty() && t.final_newline) out += '\n';
    return out;
}

void check_relative(const std::string& path, const std::string& hunk_desc) {
    const fs::path p(path);
    if (p.is_absolute()) throw Error(ErrorKind::Apply, fmt::format("{}: absolute path '{}'", hunk_desc, path));
    for (const auto& part : p) {
        if (part == "..") throw Error(ErrorKind::Apply, fmt::format("{}: path escapes worktree '{}'", hunk_desc, path));
    }
}

void apply_hunks(TextFile& file, const FileDiff& f) {
    long delta = 0;
    std::size_t floor = 0;
    for (std::size_t hi = 0; hi < f.hunks.size(); ++hi) {
        const auto& h = f.hunks[hi];
        std::vector<std::string> old_seg, new_seg;
        bool old_no_eol = false, new_no_eol = false;
        char prev = 0;
        for (const auto& l : h.lines) {
            const char c = l.empty() ? ' ' : l[0];
            const std::string body = l.empty() ? std::string() : l.substr(1);
            if (c == '\\') {
                if (prev == '-' || prev == ' ') old_no_eol = true;
                if (prev == '+' || prev == ' ') new_no_eol = true;
                continue;
            }
            if (c == ' ' || c == '-') old_seg.push_back(body);
            if (c == ' ' || c == '+') new_seg.push_back(body);
            prev = c;
        }
        const auto matches_at = [&](std::size_t pos) {
            if (pos < floor || pos + old_seg.size() > file.lines.size()) return false;
            if (!std::equal(old_seg.begin(), old_seg.end(), file.lines.begin() + static_cast<long>(pos))) return false;
            const bool at_end = pos + old_seg.size() == file.lines.size();
            if (!old_seg.empty() && at_end && old_no_eol == file.final_newline) return false;
            if (old_no_eol && !at_end) return false;
            return true;
        };
        long expected = (h.old_len == 0 ? h.old_start : h.old_start - 1) + delta;
        expected = std::clamp<long>(expected, 0, static_cast<long>(file.lines.size()));
        std::optional<std::size_t> found;
        const long limit = static_cast<long>(file.lines.size());
        for (long off = 0; off <= limit && !found; ++off) {
            for (const long cand : {expected + off, expected - off}) {
                if (cand >= 0 && cand <= limit && matches_at(static_cast<std::size_t>(cand))) {
                    found = static_cast<std::size_t>(cand);
                    break;
                }
            }
        }
        if (!found) {
            throw Error(ErrorKind::Apply, fmt::format("{}: hunk #{} ({}) does not match", f.path(), hi + 1, h.header));
        }
        const bool at_end = *found + old_seg.size() == file.lines.size();
        auto first = file.lines.begin() + static_cast<long>(*found);
        file.lines.erase(first, first + static_cast<long>(old_seg.size()));
        file.lines.insert(file.lines.begin() + static_cast<long>(*found), new_seg.begin(), new_seg.end());
        if (at_end) file.final_newline = !new_no_eol;
        floor = *found + new_seg.size();
        delta += static_cast<long>(new_seg.size()) - static_cast<long>(old_seg.size());
    }
}

struct Original {
    bool existed = false;
    std::string content;
    fs::perms perms = fs::perms::none;
};

} // namespace

std::vector<std::string> apply_patch(const fs::path& worktree, std::string_view patch) {
    const auto files = parse_unified_diff(patch);
    // In-memory overlay: path -> new content (nullopt = removed).
    std::map<std::string, std::optional<std::string>> overlay;
    std::map<std::string, bool> exec_bits;
    std::vector<std::string> changed;

    const auto current = [&](const std::string& path) -> std::optional<std::string> {
        if (auto it = overlay.find(path); it != overlay.end()) return it->second;
        const auto full = worktree / path;
        if (fs::is_regular_file(full)) return read_file(full);
        return std::nullopt;
    };

    for (const auto& f : files) {
        const auto desc = fmt::format("{} ({})", f.path(), to_string(f.kind));
        if (!f.old_path.empty()) check_relative(f.old_path, desc);
        if (!f.new_path.empty()) check_relative(f.new_path, desc);
        if (f.binary) throw Error(ErrorKind::Apply, fmt::format("{}: binary patches are not supported", f.path()));

        TextFile text;
        if (f.kind == ChangeKind::Add) {
            if (current(f.new_path)) throw Error(ErrorKind::Apply, fmt::format("{}: file already exists", f.new_path));
        } else {
            auto content = current(f.old_path);
            if (!content) throw Error(ErrorKind::Apply, fmt::format("{}: file does not exist", f.old_path));
            text = to_text(*content);
        }
        if (f.kind == ChangeKind::Rename && f.new_path != f.old_path && current(f.new_path)) {
            throw Error(ErrorKind::Apply, fmt::format("{}: rename target already exists", f.new_path));
        }
        apply_hunks(text, f);

        if (f.kind == ChangeKind::Delete) {
            if (!text.lines.empty()) {
                throw Error(ErrorKind::Apply, fmt::format("{}: deletion leaves content behind", f.old_path));
            }
            overlay[f.old_path] = std::nullopt;
        } else {
            if (f.kind == ChangeKind::Rename && f.old_path != f.new_path) overlay[f.old_path] = std::nullopt;
            overlay[f.new_path] = from_text(text);
            if (f.new_executable) exec_bits[f.new_path] = true;
        }
        if (std::find(changed.begin(), changed.end(), f.path()) == changed.end()) changed.push_back(f.path());
    }

    std::map<std::string, Original> originals;
    try {
        for (const auto& [path, content] : overlay) {
            const auto full = worktree / path;
            Original orig;
            if (fs::is_regular_file(full)) {
                orig.existed = true;
                orig.content = read_file(full);
                orig.perms = fs::status(full).permissions();
            }
            originals.emplace(path, std::move(orig));
            if (content) {
                write_file(full, *content);
                if (exec_bits.count(path)) {
                    fs::permissions(full, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                                    fs::perm_options::add);
                }
            } else {
                fs::remove(full);
            }
        }
    } catch (const std::exception& e) {
        for (const auto& [path, orig] : originals) {
            const auto full = worktree / path;
            std::error_code ec;
            if (orig.existed) {
                write_file(full, orig.content);
                fs::permissions(full, orig.perms, ec);
            } else {
                fs::remove(full, ec);
            }
        }
        throw Error(ErrorKind::Apply, fmt::format("writing patched files failed: {}", e.what()));
    }
    return changed;
}

std::string reverse_patch(std::string_view text) {
    auto files = parse_unified_diff(text);
    std::vector<FileDiff> reversed;
    for (const auto& f : files) {
        if (f.binary) throw Error(ErrorKind::Apply, fmt::format("{}: cannot reverse a binary patch", f.path()));
        FileDiff r;
        r.old_path = f.new_path;
        r.new_path = f.old_path;
        r.kind = f.kind == ChangeKind::Add ? ChangeKind::Delete : f.kind == ChangeKind::Delete ? ChangeKind::Add : f.kind;
        const auto a = r.old_path.empty() ? r.new_path : r.old_path;
        const auto b = r.new_path.empty() ? r.old_path : r.new_path;
        r.header.push_back(fmt::format("diff --git a/{} b/{}", a, b));
        const auto mode = f.new_executable ? "100755" : "100644";
        if (r.kind == ChangeKind::Add) r.header.push_back(fmt::format("new file mode {}", mode));
        if (r.kind == ChangeKind::Delete) r.header.push_back(fmt::format("deleted file mode {}", mode));
        if (r.kind == ChangeKind::Rename) {
            r.header.push_back("rename from " + r.old_path);
            r.header.push_back("rename to " + r.new_path);
        }
        if (!f.hunks.empty()) {
            r.header.push_back(r.old_path.empty() ? "--- /dev/null" : "--- a/" + r.old_path);
            r.header.push_back(r.new_path.empty() ? "+++ /dev/null" : "+++ b/" + r.new_path);
        }
        for (const auto& h : f.hunks) {
            Hunk rh;
            rh.old_start = h.new_start;
            rh.old_len = h.new_len;
            rh.new_start = h.old_start;
            rh.new_len = h.old_len;
            const auto section_pos = h.header.find(" @@", 3);
            const auto section = section_pos == std::string::npos ? std::string() : h.header.substr(section_pos + 3);
            rh.header = fmt::format("@@ -{},{} +{},{} @@{}", rh.old_start, rh.old_len, rh.new_start, rh.new_len, section);
            for (const auto& l : h.lines) {
                if (!l.empty() && l[0] == '+') rh.lines.push_back("-" + l.substr(1));
                else if (!l.empty() && l[0] == '-') rh.lines.push_back("+" + l.substr(1));
                else rh.lines.push_back(l);
            }
            r.hunks.push_back(std::move(rh));
        }
        reversed.push_back(std::move(r));
    }
    return render(reversed);
}

} // namespace harvest::patch
