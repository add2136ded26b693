// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

// Small backtracking matcher with Python `re` semantics for str patterns:
// Unicode \s and \d, `.` excluding '\n', leftmost-first alternation, greedy
// and lazy quantifiers. Supports only what the reference log parsers use.
// Internal to the library.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace harvest::pyre {

/// Decoded text: code points plus the byte offset of each one (size + 1
/// entries) so captures can be cut from the original bytes. Invalid UTF-8
/// bytes decode to U+FFFD one byte at a time.
struct Text {
    std::u32string cps;
    std::vector<std::size_t> offsets;
    std::string_view bytes;
};

Text decode(std::string_view bytes);

bool is_space(char32_t c);   // str.isspace
bool is_digit(char32_t c);   // Unicode Nd
bool is_line_break(char32_t c);  // str.splitlines boundaries

/// str.strip() with no arguments, on UTF-8 bytes.
std::string_view strip(std::string_view bytes);

/// str.splitlines() on UTF-8 bytes.
std::vector<std::string_view> splitlines(std::string_view bytes);

class Pattern {
public:
    /// Throws harvest::Error(InvalidArgument) on unsupported syntax.
    explicit Pattern(std::string_view source);
    ~Pattern();
    Pattern(Pattern&&) noexcept;
    Pattern& operator=(Pattern&&) noexcept;

    /// re.match: anchored at the start. Returns group byte strings
    /// (index 0 = whole match); unmatched groups are nullopt.
    [[nodiscard]] std::optional<std::vector<std::optional<std::string>>> match(std::string_view subject) const;

    [[nodiscard]] int groups() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace harvest::pyre
