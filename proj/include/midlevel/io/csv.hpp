#pragma once

// RFC-4180 CSV: comma separated, fields optionally double-quoted, "" inside
// quotes for a literal quote, CRLF or LF record ends, quoted fields may span
// lines. A leading UTF-8 byte order mark is ignored.

#include "midlevel/error.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace midlevel::io {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines; // 1-based source line where each row starts

    /// Column position by exact name.
    std::optional<std::size_t> column(std::string_view name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return i;
        return std::nullopt;
    }
};

inline CsvTable parse_csv(std::string_view text, std::string_view source = "<csv>")
{
    if (text.substr(0, 3) == "\xEF\xBB\xBF")
        text.remove_prefix(3);
    std::vector<std::vector<std::string>> records;
    std::vector<std::size_t> starts;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, closed = false, field_started = false, record_open = false;
    std::size_t line = 1, record_line = 1;

    const auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        closed = false;
    };
    const auto end_record = [&] {
        end_field();
        // a bare empty line is not a record
        if (!(record.size() == 1 && record[0].empty())) {
            records.push_back(std::move(record));
            starts.push_back(record_line);
        }
        record.clear();
        record_open = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (!record_open) {
            record_open = true;
            record_line = line;
        }
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                    closed = true;
                }
            } else {
                if (c == '\n')
                    ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (field_started)
                throw Error(Errc::CorruptFile,
                            std::string(source) + ":" + std::to_string(line) + ": quote inside unquoted field");
            quoted = true;
            field_started = true;
            break;
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n')
                break;
            [[fallthrough]];
        case '\n':
            end_record();
            ++line;
            break;
        default:
            if (closed)
                throw Error(Errc::CorruptFile,
                            std::string(source) + ":" + std::to_string(line) + ": text after closing quote");
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted)
        throw Error(Errc::CorruptFile, std::string(source) + ":" + std::to_string(record_line) + ": unterminated quote");
    if (record_open)
        end_record();

    CsvTable t;
    if (records.empty())
        throw Error(Errc::CorruptFile, std::string(source) + ": no header row");
    t.header = std::move(records.front());
    for (auto& h : t.header) {
        const auto b = h.find_first_not_of(" \t"), e = h.find_last_not_of(" \t");
        h = b == std::string::npos ? std::string() : h.substr(b, e - b + 1);
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        t.rows.push_back(std::move(records[r]));
        t.lines.push_back(starts[r]);
    }
    return t;
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path), path.string()); }

inline std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\r\n") == std::string_view::npos && (s.empty() || (s.front() != ' ' && s.back() != ' ')))
        return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i)
            os << ',';
        os << csv_field(fields[i]);
    }
    os << '\n';
}

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t'))
        s.remove_suffix(1);
    return s;
}

/// Whole-field finite number, surrounding blanks allowed.
inline std::optional<double> parse_double(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
        return std::nullopt;
    return v;
}

inline std::optional<long long> parse_integer(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
        return std::nullopt;
    return v;
}

} // namespace midlevel::io
