// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Harvest Contributors

#include "pyre.hpp"

#include "harvest/error.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <utility>

namespace harvest::pyre {

namespace {

struct Range {
    char32_t lo;
    char32_t hi;
};

// Unicode 13 general category Nd, as used by CPython 3.10.
constexpr std::array<Range, 61> kDigits{{
    {0x30, 0x39},       {0x660, 0x669},     {0x6f0, 0x6f9},     {0x7c0, 0x7c9},     {0x966, 0x96f},
    {0x9e6, 0x9ef},     {0xa66, 0xa6f},     {0xae6, 0xaef},     {0xb66, 0xb6f},     {0xbe6, 0xbef},
    {0xc66, 0xc6f},     {0xce6, 0xcef},     {0xd66, 0xd6f},     {0xde6, 0xdef},     {0xe50, 0xe59},
    {0xed0, 0xed9},     {0xf20, 0xf29},     {0x1040, 0x1049},   {0x1090, 0x1099},   {0x17e0, 0x17e9},
    {0x1810, 0x1819},   {0x1946, 0x194f},   {0x19d0, 0x19d9},   {0x1a80, 0x1a89},   {0x1a90, 0x1a99},
    {0x1b50, 0x1b59},   {0x1bb0, 0x1bb9},   {0x1c40, 0x1c49},   {0x1c50, 0x1c59},   {0xa620, 0xa629},
    {0xa8d0, 0xa8d9},   {0xa900, 0xa909},   {0xa9d0, 0xa9d9},   {0xa9f0, 0xa9f9},   {0xaa50, 0xaa59},
    {0xabf0, 0xabf9},   {0xff10, 0xff19},   {0x104a0, 0x104a9}, {0x10d30, 0x10d39}, {0x11066, 0x1106f},
    {0x110f0, 0x110f9}, {0x11136, 0x1113f}, {0x111d0, 0x111d9}, {0x112f0, 0x112f9}, {0x11450, 0x11459},
    {0x114d0, 0x114d9}, {0x11650, 0x11659}, {0x116c0, 0x116c9}, {0x11730, 0x11739}, {0x118e0, 0x118e9},
    {0x11950, 0x11959}, {0x11c50, 0x11c59}, {0x11d50, 0x11d59}, {0x11da0, 0x11da9}, {0x16a60, 0x16a69},
    {0x16b50, 0x16b59}, {0x1d7ce, 0x1d7ff}, {0x1e140, 0x1e149}, {0x1e2f0, 0x1e2f9}, {0x1e950, 0x1e959},
    {0x1fbf0, 0x1fbf9},
}};

struct CharSet {
    std::vector<Range> ranges;
    bool space = false, not_space = false, digit = false, not_digit = false;
    bool negated = false;

    [[nodiscard]] bool contains(char32_t c) const {
        bool hit = std::any_of(ranges.begin(), ranges.end(), [c](Range r) { return c >= r.lo && c <= r.hi; });
        hit = hit || (space && is_space(c)) || (not_space && !is_space(c)) || (digit && is_digit(c)) ||
              (not_digit && !is_digit(c));
        return hit != negated;
    }
};

struct Node;
using Seq = std::vector<Node>;

struct Node {
    enum Kind { Char, Set, Any, Group, Bol, Eol } kind = Char;
    char32_t ch = 0;
    CharSet set;
    std::vector<Seq> alts;  // Group only
    int capture = -1;
    int min = 1;
    int max = 1;  // -1 = unbounded
    bool lazy = false;

    [[nodiscard]] bool single(char32_t c) const {
        switch (kind) {
        case Char: return c == ch;
        case Set: return set.contains(c);
        case Any: return c != U'\n';
        default: return false;
        }
    }
};

class Compiler {
public:
    explicit Compiler(const std::u32string& src) : s_(src) {}

    Seq run(int& ngroups) {
        Node root;
        root.kind = Node::Group;
        root.alts = alternation();
        if (i_ != s_.size()) fail("unbalanced parenthesis");
        ngroups = groups_;
        return Seq{std::move(root)};
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::InvalidArgument, "unsupported pattern: " + what + " at " + std::to_string(i_));
    }

    std::vector<Seq> alternation() {
        std::vector<Seq> alts;
        alts.push_back(sequence());
        while (i_ < s_.size() && s_[i_] == U'|') {
            ++i_;
            alts.push_back(sequence());
        }
        return alts;
    }

    Seq sequence() {
        Seq seq;
        while (i_ < s_.size() && s_[i_] != U'|' && s_[i_] != U')') {
            Node n = atom();
            quantifier(n);
            seq.push_back(std::move(n));
        }
        return seq;
    }

    CharSet escape_class(char32_t e) {
        CharSet cs;
        switch (e) {
        case U's': cs.space = true; break;
        case U'S': cs.not_space = true; break;
        case U'd': cs.digit = true; break;
        case U'D': cs.not_digit = true; break;
        default: break;
        }
        return cs;
    }

    char32_t escape_literal(char32_t e) {
        switch (e) {
        case U'n': return U'\n';
        case U't': return U'\t';
        case U'r': return U'\r';
        case U'f': return U'\f';
        case U'v': return U'\v';
        default: break;
        }
        if ((e >= U'a' && e <= U'z') || (e >= U'A' && e <= U'Z') || (e >= U'0' && e <= U'9')) {
            fail(std::string("escape \\") + static_cast<char>(e));
        }
        return e;
    }

    Node atom() {
        Node n;
        const char32_t c = s_[i_++];
        switch (c) {
        case U'(': {
            n.kind = Node::Group;
            if (i_ + 1 < s_.size() && s_[i_] == U'?' && s_[i_ + 1] == U':') {
                i_ += 2;
            } else if (i_ < s_.size() && s_[i_] == U'?') {
                fail("group extension");
            } else {
                n.capture = ++groups_;
            }
            n.alts = alternation();
            if (i_ >= s_.size() || s_[i_] != U')') fail("missing )");
            ++i_;
            return n;
        }
        case U'[': n.kind = Node::Set; n.set = bracket(); return n;
        case U'.': n.kind = Node::Any; return n;
        case U'^': n.kind = Node::Bol; return n;
        case U'$': n.kind = Node::Eol; return n;
        case U'\\': {
            if (i_ >= s_.size()) fail("trailing backslash");
            const char32_t e = s_[i_++];
            if (e == U's' || e == U'S' || e == U'd' || e == U'D') {
                n.kind = Node::Set;
                n.set = escape_class(e);
            } else {
                n.ch = escape_literal(e);
            }
            return n;
        }
        case U'*': case U'+': case U'?': case U'{': fail("nothing to repeat");
        default: n.ch = c; return n;
        }
    }

    CharSet bracket() {
        CharSet cs;
        if (i_ < s_.size() && s_[i_] == U'^') {
            cs.negated = true;
            ++i_;
        }
        bool first = true;
        while (i_ < s_.size() && (s_[i_] != U']' || first)) {
            first = false;
            char32_t lo = s_[i_++];
            if (lo == U'\\') {
                if (i_ >= s_.size()) fail("trailing backslash");
                const char32_t e = s_[i_++];
                if (e == U's' || e == U'S' || e == U'd' || e == U'D') {
                    const auto sub = escape_class(e);
                    cs.space |= sub.space; cs.not_space |= sub.not_space;
                    cs.digit |= sub.digit; cs.not_digit |= sub.not_digit;
                    continue;
                }
                lo = escape_literal(e);
            }
            char32_t hi = lo;
            if (i_ + 1 < s_.size() && s_[i_] == U'-' && s_[i_ + 1] != U']') {
                ++i_;
                hi = s_[i_++];
                if (hi == U'\\') {
                    if (i_ >= s_.size()) fail("trailing backslash");
                    hi = escape_literal(s_[i_++]);
                }
                if (hi < lo) fail("bad range");
            }
            cs.ranges.push_back({lo, hi});
        }
        if (i_ >= s_.size()) fail("missing ]");
        ++i_;
        return cs;
    }

    int number() {
        int v = 0;
        bool any = false;
        while (i_ < s_.size() && s_[i_] >= U'0' && s_[i_] <= U'9') {
            v = v * 10 + static_cast<int>(s_[i_++] - U'0');
            any = true;
        }
        return any ? v : -1;
    }

    void quantifier(Node& n) {
        if (i_ >= s_.size()) return;
        const char32_t q = s_[i_];
        if (q == U'*') { n.min = 0; n.max = -1; ++i_; }
        else if (q == U'+') { n.min = 1; n.max = -1; ++i_; }
        else if (q == U'?') { n.min = 0; n.max = 1; ++i_; }
        else if (q == U'{') {
            const auto save = i_++;
            const int lo = number();
            int hi = lo;
            if (i_ < s_.size() && s_[i_] == U',') {
                ++i_;
                hi = number();
            }
            if (lo < 0 || i_ >= s_.size() || s_[i_] != U'}') {
                i_ = save;  // Python treats a malformed brace as a literal
                return;
            }
            ++i_;
            n.min = lo;
            n.max = hi;
        } else {
            return;
        }
        if (n.kind == Node::Bol || n.kind == Node::Eol) fail("nothing to repeat");
        if (i_ < s_.size() && s_[i_] == U'?') {
            n.lazy = true;
            ++i_;
        }
    }

    const std::u32string& s_;
    std::size_t i_ = 0;
    int groups_ = 0;
};

using Cont = std::function<bool(std::size_t)>;

class Matcher {
public:
    Matcher(const Text& t, int ngroups) : t_(t), caps_(static_cast<std::size_t>(ngroups) + 1, {-1, -1}) {}

    bool seq(const Seq& s, std::size_t i, std::size_t pos, const Cont& k) {
        if (i == s.size()) return k(pos);
        const Node& n = s[i];
        const auto next = [&](std::size_t p) { return seq(s, i + 1, p, k); };
        switch (n.kind) {
        case Node::Bol: return pos == 0 && next(pos);
        case Node::Eol: {
            const auto size = t_.cps.size();
            const bool at_end = pos == size || (pos + 1 == size && t_.cps[pos] == U'\n');
            return at_end && next(pos);
        }
        case Node::Group: return repeat(n, 0, pos, next);
        default: break;
        }
        std::size_t run = 0;
        const std::size_t limit = n.max < 0 ? t_.cps.size() - pos : static_cast<std::size_t>(n.max);
        while (run < limit && pos + run < t_.cps.size() && n.single(t_.cps[pos + run])) ++run;
        const auto lo = static_cast<std::size_t>(n.min);
        if (run < lo) return false;
        if (n.lazy) {
            for (std::size_t c = lo; c <= run; ++c)
                if (next(pos + c)) return true;
        } else {
            for (std::size_t c = run + 1; c-- > lo;)
                if (next(pos + c)) return true;
        }
        return false;
    }

    std::vector<std::pair<long, long>>& captures() { return caps_; }

private:
    bool once(const Node& n, std::size_t pos, const Cont& k) {
        for (const auto& alt : n.alts) {
            const bool ok = seq(alt, 0, pos, [&](std::size_t end) {
                if (n.capture < 0) return k(end);
                auto& slot = caps_[static_cast<std::size_t>(n.capture)];
                const auto saved = slot;
                slot = {static_cast<long>(pos), static_cast<long>(end)};
                if (k(end)) return true;
                slot = saved;
                return false;
            });
            if (ok) return true;
        }
        return false;
    }

    bool repeat(const Node& n, int count, std::size_t pos, const Cont& k) {
        const bool can_stop = count >= n.min;
        const bool can_go = n.max < 0 || count < n.max;
        const auto more = [&]() {
            return once(n, pos, [&](std::size_t end) {
                if (end == pos && can_stop) return false;  // empty iteration makes no progress
                return repeat(n, count + 1, end, k);
            });
        };
        if (n.lazy) {
            if (can_stop && k(pos)) return true;
            return can_go && more();
        }
        if (can_go && more()) return true;
        return can_stop && k(pos);
    }

    const Text& t_;
    std::vector<std::pair<long, long>> caps_;
};

std::u32string to_u32(std::string_view s) { return decode(s).cps; }

} // namespace

Text decode(std::string_view bytes) {
    Text t;
    t.bytes = bytes;
    t.cps.reserve(bytes.size());
    t.offsets.reserve(bytes.size() + 1);
    std::size_t i = 0;
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(bytes[k]); };
    while (i < bytes.size()) {
        t.offsets.push_back(i);
        const unsigned char b = byte(i);
        int len = 0;
        char32_t cp = 0;
        if (b < 0x80) { len = 1; cp = b; }
        else if ((b & 0xE0) == 0xC0 && b >= 0xC2) { len = 2; cp = b & 0x1F; }
        else if ((b & 0xF0) == 0xE0) { len = 3; cp = b & 0x0F; }
        else if ((b & 0xF8) == 0xF0 && b <= 0xF4) { len = 4; cp = b & 0x07; }
        bool ok = len > 0 && i + static_cast<std::size_t>(len) <= bytes.size();
        for (int k = 1; ok && k < len; ++k) {
            const unsigned char cb = byte(i + static_cast<std::size_t>(k));
            if ((cb & 0xC0) != 0x80) ok = false;
            cp = (cp << 6) | (cb & 0x3F);
        }
        if (ok && ((len == 3 && (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF))) || (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)))) {
            ok = false;
        }
        if (!ok) {
            t.cps.push_back(0xFFFD);
            ++i;
        } else {
            t.cps.push_back(cp);
            i += static_cast<std::size_t>(len);
        }
    }
    t.offsets.push_back(bytes.size());
    return t;
}

bool is_space(char32_t c) {
    return (c >= 0x9 && c <= 0xd) || (c >= 0x1c && c <= 0x20) || c == 0x85 || c == 0xa0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200a) || c == 0x2028 || c == 0x2029 || c == 0x202f || c == 0x205f ||
           c == 0x3000;
}

bool is_digit(char32_t c) {
    const auto it = std::upper_bound(kDigits.begin(), kDigits.end(), c, [](char32_t v, Range r) { return v < r.lo; });
    return it != kDigits.begin() && c <= std::prev(it)->hi;
}

bool is_line_break(char32_t c) {
    return (c >= 0xa && c <= 0xd) || (c >= 0x1c && c <= 0x1e) || c == 0x85 || c == 0x2028 || c == 0x2029;
}

std::string_view strip(std::string_view bytes) {
    const Text t = decode(bytes);
    std::size_t b = 0, e = t.cps.size();
    while (b < e && is_space(t.cps[b])) ++b;
    while (e > b && is_space(t.cps[e - 1])) --e;
    return bytes.substr(t.offsets[b], t.offsets[e] - t.offsets[b]);
}

std::vector<std::string_view> splitlines(std::string_view bytes) {
    const Text t = decode(bytes);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < t.cps.size()) {
        if (!is_line_break(t.cps[i])) {
            ++i;
            continue;
        }
        out.push_back(bytes.substr(t.offsets[start], t.offsets[i] - t.offsets[start]));
        if (t.cps[i] == U'\r' && i + 1 < t.cps.size() && t.cps[i + 1] == U'\n') ++i;
        start = ++i;
    }
    if (start < t.cps.size()) out.push_back(bytes.substr(t.offsets[start]));
    return out;
}

struct Pattern::Impl {
    Seq root;
    int ngroups = 0;
};

Pattern::Pattern(std::string_view source) : impl_(std::make_unique<Impl>()) {
    const auto src = to_u32(source);
    impl_->root = Compiler(src).run(impl_->ngroups);
}

Pattern::~Pattern() = default;
Pattern::Pattern(Pattern&&) noexcept = default;
Pattern& Pattern::operator=(Pattern&&) noexcept = default;

int Pattern::groups() const { return impl_->ngroups; }

std::optional<std::vector<std::optional<std::string>>> Pattern::match(std::string_view subject) const {
    const Text t = decode(subject);
    Matcher m(t, impl_->ngroups);
    std::size_t end = 0;
    if (!m.seq(impl_->root, 0, 0, [&](std::size_t e) { end = e; return true; })) return std::nullopt;
    std::vector<std::optional<std::string>> groups;
    groups.emplace_back(std::string(subject.substr(0, t.offsets[end])));
    for (std::size_t g = 1; g < m.captures().size(); ++g) {
        const auto [b, e] = m.captures()[g];
        if (b < 0) {
            groups.emplace_back(std::nullopt);
        } else {
            const auto ob = t.offsets[static_cast<std::size_t>(b)];
            const auto oe = t.offsets[static_cast<std::size_t>(e)];
            groups.emplace_back(std::string(subject.substr(ob, oe - ob)));
        }
    }
    return groups;
}

} // namespace harvest::pyre
