// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "harvest/util.hpp"

#include "harvest/error.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <memory>
#include <sstream>
#include <sys/stat.h>

namespace fs = std::filesystem;

namespace harvest {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Apply: return "apply";
    case ErrorKind::Io: return "io";
    case ErrorKind::Sandbox: return "sandbox";
    case ErrorKind::Seam: return "seam";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Pipeline: return "pipeline";
    }
    return "unknown";
}

namespace {

int parse_digits(std::string_view text, std::size_t pos, std::size_t count) {
    if (pos + count > text.size()) {
        throw Error(ErrorKind::Parse, fmt::format("timestamp too short: '{}'", text));
    }
    int value = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            throw Error(ErrorKind::Parse, fmt::format("bad timestamp '{}'", text));
        }
        value = value * 10 + (text[i] - '0');
    }
    return value;
}

void expect_char(std::string_view text, std::size_t pos, std::string_view allowed) {
    if (pos >= text.size() || allowed.find(text[pos]) == std::string_view::npos) {
        throw Error(ErrorKind::Parse, fmt::format("bad timestamp '{}'", text));
    }
}

} // namespace

Timestamp parse_rfc3339(std::string_view text) {
    using namespace std::chrono;
    const int y = parse_digits(text, 0, 4);
    expect_char(text, 4, "-");
    const int mo = parse_digits(text, 5, 2);
    expect_char(text, 7, "-");
    const int d = parse_digits(text, 8, 2);
    expect_char(text, 10, "Tt ");
    const int h = parse_digits(text, 11, 2);
    expect_char(text, 13, ":");
    const int mi = parse_digits(text, 14, 2);
    expect_char(text, 16, ":");
    const int s = parse_digits(text, 17, 2);
    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    int offset_minutes = 0;
    if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) {
        ++pos;
    } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
        const int sign = text[pos] == '-' ? -1 : 1;
        const int oh = parse_digits(text, pos + 1, 2);
        expect_char(text, pos + 3, ":");
        const int om = parse_digits(text, pos + 4, 2);
        offset_minutes = sign * (oh * 60 + om);
        pos += 6;
    } else {
        throw Error(ErrorKind::Parse, fmt::format("timestamp without zone: '{}'", text));
    }
    if (pos != text.size()) {
        throw Error(ErrorKind::Parse, fmt::format("trailing characters in timestamp '{}'", text));
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
        throw Error(ErrorKind::Parse, fmt::format("timestamp out of range: '{}'", text));
    }
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s} - minutes{offset_minutes};
}

std::string format_rfc3339(Timestamp ts) {
    using namespace std::chrono;
    const auto days = floor<std::chrono::days>(ts);
    const year_month_day ymd{days};
    const hh_mm_ss hms{ts - days};
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                       hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

std::string sha256_hex(std::string_view data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw Error(ErrorKind::Io, "sha256 digest failed");
    }
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
    return out;
}

std::string tree_hash(const fs::path& root) {
    std::vector<std::string> entries;
    if (!fs::exists(root)) return sha256_hex("");
    for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
        const auto rel = fs::relative(it->path(), root).generic_string();
        const auto status = it->symlink_status();
        if (fs::is_symlink(status)) {
            entries.push_back("L " + rel + " -> " + fs::read_symlink(it->path()).generic_string());
        } else if (fs::is_directory(status)) {
            entries.push_back("D " + rel);
        } else if (fs::is_regular_file(status)) {
            const bool exec = (status.permissions() & fs::perms::owner_exec) != fs::perms::none;
            entries.push_back(fmt::format("F {} {} {}", rel, exec ? "x" : "-", sha256_hex(read_file(it->path()))));
        }
    }
    std::sort(entries.begin(), entries.end());
    return sha256_hex(join(entries, "\n"));
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, fmt::format("cannot read '{}'", path.string()));
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::Io, fmt::format("short write to '{}'", path.string()));
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    write_file(tmp, content);
    fs::rename(tmp, path);
}

void copy_tree(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    for (auto it = fs::recursive_directory_iterator(from); it != fs::recursive_directory_iterator(); ++it) {
        const auto target = to / it->path().lexically_relative(from);
        const auto status = it->symlink_status();
        if (fs::is_symlink(status)) {
            fs::copy_symlink(it->path(), target);
        } else if (fs::is_directory(status)) {
            fs::create_directories(target);
        } else if (fs::is_regular_file(status)) {
            fs::copy_file(it->path(), target, fs::copy_options::overwrite_existing);
            fs::last_write_time(target, fs::last_write_time(it->path()));
        }
    }
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        lines.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim_ascii(std::string_view text) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
    std::size_t b = 0, e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return std::string(text.substr(b, e - b));
}

std::string with_thousands(std::uint64_t value) {
    auto digits = std::to_string(value);
    std::string out;
    const auto n = digits.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i && (n - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return out;
}

std::string strip_ansi(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '\x1b') {
            out += text[i++];
            continue;
        }
        if (i + 1 < text.size() && text[i + 1] == '[') {
            // CSI: parameters 0x30-0x3F, intermediates 0x20-0x2F, final 0x40-0x7E
            std::size_t j = i + 2;
            while (j < text.size() && text[j] >= 0x30 && text[j] <= 0x3F) ++j;
            while (j < text.size() && text[j] >= 0x20 && text[j] <= 0x2F) ++j;
            if (j < text.size() && text[j] >= 0x40 && text[j] <= 0x7E) ++j;
            i = j;
        } else if (i + 1 < text.size() && text[i + 1] == ']') {
            // OSC, terminated by BEL or ESC '\'
            std::size_t j = i + 2;
            while (j < text.size() && text[j] != '\a' && !(text[j] == '\x1b' && j + 1 < text.size() && text[j + 1] == '\\')) ++j;
            if (j < text.size()) j += text[j] == '\a' ? 1 : 2;
            i = j;
        } else {
            i += std::min<std::size_t>(2, text.size() - i);
        }
    }
    return out;
}

} // namespace harvest
