#pragma once

// Unicode-aware text helpers shared by the BLEU tokenizer, the stub
// definition backend and the definition truncation rule.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace sensegraph::text {

namespace detail {

template <typename F>
void for_each_code_point(std::string_view s, F&& f) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    const auto length = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < length) {
        UChar32 c;
        U8_NEXT(bytes, i, length, c);
        if (c < 0) c = 0xFFFD;
        f(c);
    }
}

inline void append_utf8(std::string& out, UChar32 c) {
    uint8_t buf[U8_MAX_LENGTH];
    int32_t n = 0;
    U8_APPEND_UNSAFE(buf, n, c);
    out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
}

} // namespace detail

// Number of Unicode code points in a UTF-8 string.
inline std::size_t code_point_length(std::string_view s) {
    std::size_t n = 0;
    detail::for_each_code_point(s, [&](UChar32) { ++n; });
    return n;
}

inline bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

// Split on Unicode whitespace, keeping tokens verbatim.
inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    detail::for_each_code_point(s, [&](UChar32 c) {
        if (is_space(c)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            detail::append_utf8(current, c);
        }
    });
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// The pinned metric tokenizer: lowercase, drop punctuation code points,
// split on whitespace. "Coin-like, Metal." -> {"coinlike", "metal"}.
inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    detail::for_each_code_point(s, [&](UChar32 c) {
        if (is_space(c)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
            return;
        }
        if (u_ispunct(c)) return;
        detail::append_utf8(current, u_tolower(c));
    });
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline std::string lowercase(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    detail::for_each_code_point(s, [&](UChar32 c) { detail::append_utf8(out, u_tolower(c)); });
    return out;
}

inline std::string trim(std::string_view s) {
    std::vector<UChar32> cps;
    detail::for_each_code_point(s, [&](UChar32 c) { cps.push_back(c); });
    std::size_t b = 0, e = cps.size();
    while (b < e && is_space(cps[b])) ++b;
    while (e > b && is_space(cps[e - 1])) --e;
    std::string out;
    for (std::size_t i = b; i < e; ++i) detail::append_utf8(out, cps[i]);
    return out;
}

} // namespace sensegraph::text
