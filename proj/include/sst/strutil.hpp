#pragma once
// Small string helpers shared across modules (trim/split, strict numeric
// parsing, and the %.17g float formatting used by every CSV/config writer).

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "sst/errors.hpp"

namespace sst {

inline std::string_view trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\n' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\n' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline bool parse_i64(std::string_view s, int64_t& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size() && !s.empty();
}

inline bool parse_f64(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size() && !s.empty();
}

inline int64_t require_i64(std::string_view s, const std::string& what) {
    int64_t v = 0;
    expect(parse_i64(s, v), Errc::config_parse, "expected integer for " + what + ", got '" + std::string(s) + "'");
    return v;
}

inline double require_f64(std::string_view s, const std::string& what) {
    double v = 0;
    expect(parse_f64(s, v), Errc::config_parse, "expected number for " + what + ", got '" + std::string(s) + "'");
    return v;
}

// round-trippable double formatting, used everywhere a float hits a file
inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

} // namespace sst
