#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace pdelin::io {

/// Shortest decimal text that round-trips the double exactly.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

/// Writes `content` to `path` via a temporary file and rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw ConfigError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    for (auto& s : out) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
        while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    }
    return out;
}

inline double parse_double(const std::string& text, const std::string& where) {
    double value = 0.0;
    auto first = text.data();
    auto last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last)
        throw ConfigError(where + ": expected a number, got '" + text + "'");
    return value;
}

/// A parsed CSV table: header names and numeric rows.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError("missing column '" + name + "'");
    }
};

/// Reads a numeric CSV with a header row. Every row must match the header width.
inline CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split(line);
        if (table.header.empty()) {
            table.header = cells;
            continue;
        }
        if (cells.size() != table.header.size())
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(table.header.size()) + " columns, got " +
                              std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells)
            row.push_back(parse_double(c, path.string() + ":" + std::to_string(lineno)));
        table.rows.push_back(std::move(row));
    }
    if (table.header.empty()) throw ConfigError(path.string() + ": empty file");
    return table;
}

/// Accumulates CSV text with exact double formatting.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
    }

    template <class... Ts>
    void row(const Ts&... values) {
        bool first = true;
        ((emit(values, first)), ...);
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        bool first = true;
        for (double v : values) emit(v, first);
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

    void save(const std::filesystem::path& path) const { write_atomic(path, out_.str()); }

private:
    template <class T>
    void emit(const T& value, bool& first) {
        if (!first) out_ << ',';
        first = false;
        if constexpr (std::is_floating_point_v<T>)
            out_ << format_double(static_cast<double>(value));
        else
            out_ << value;
    }

    std::ostringstream out_;
};

}  // namespace pdelin::io
