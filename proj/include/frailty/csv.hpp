#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "frailty/error.hpp"

namespace frailty::csv {

// Minimal comma-separated reader for the flat numeric tables this project
// exchanges. Fields never contain commas or quotes.

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based line number of each row in the source text.
    std::vector<std::size_t> lines;

    std::optional<std::size_t> column(std::string_view name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }
};

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline Table parse(std::string_view text)
{
    Table t;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool have_header = false;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = trim(text.substr(pos, nl - pos));
        ++line_no;
        pos = nl + 1;
        if (line.empty()) {
            if (nl == text.size()) break;
            continue;
        }
        if (!have_header) {
            t.header = split_line(line);
            have_header = true;
        } else {
            t.rows.push_back(split_line(line));
            t.lines.push_back(line_no);
        }
        if (nl == text.size()) break;
    }
    return t;
}

inline std::optional<double> to_double(std::string_view s)
{
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<long long> to_int(std::string_view s)
{
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

/// Column indices for a required header, or MissingColumn naming the first absent one.
inline std::vector<std::size_t> require_columns(const Table& t, const std::vector<std::string>& names)
{
    std::vector<std::size_t> idx;
    idx.reserve(names.size());
    for (const auto& n : names) {
        const auto c = t.column(n);
        if (!c) throw Error(Errc::MissingColumn, "missing column '" + n + "'");
        idx.push_back(*c);
    }
    return idx;
}

} // namespace frailty::csv
