#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "errors.hpp"
#include "io.hpp"

namespace pdelin {

/// Flat INI configuration: `[section]` headers, `key = value` lines, comments
/// starting with `;` or `#`. Keys are addressed as "section.key".
class Config {
public:
    static Config parse(const std::string& text, const std::string& source = "<config>") {
        Config c;
        c.source_ = source;
        std::istringstream in(text);
        std::ostringstream cleaned;
        std::string line, section;
        for (int lineno = 1; std::getline(in, line); ++lineno) {
            auto t = trim(line);
            if (!t.empty() && t.front() == '#') t.clear();
            cleaned << t << '\n';
            if (t.empty() || t.front() == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']') throw ConfigError(source + ":" + std::to_string(lineno) + ": unterminated section header");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
            const auto key = trim(t.substr(0, eq));
            c.lines_[section.empty() ? key : section + "." + key] = lineno;
        }
        std::istringstream parsed(cleaned.str());
        try {
            boost::property_tree::ini_parser::read_ini(parsed, c.tree_);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
        }
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        std::string text;
        try {
            text = io::read_text(path);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        return parse(text, path.string());
    }

    const std::string& source() const noexcept { return source_; }

    bool has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

    /// "file:line" of a key, or just the file when the key is absent.
    std::string where(const std::string& key) const {
        auto it = lines_.find(key);
        return it == lines_.end() ? source_ : source_ + ":" + std::to_string(it->second);
    }

    std::string get_string(const std::string& key) const {
        auto v = tree_.get_optional<std::string>(key);
        if (!v) throw ConfigError(source_ + ": missing required key `" + key + "`");
        return trim(*v);
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    double get_double(const std::string& key) const {
        return io::parse_double(get_string(key), where(key) + ": key `" + key + "`");
    }

    double get_double(const std::string& key, double fallback) const { return has(key) ? get_double(key) : fallback; }

    /// Integers accept exponent notation (`1e8`) as long as the value is integral.
    long long get_int(const std::string& key) const {
        const double v = get_double(key);
        if (v != std::floor(v) || std::abs(v) > 9.0e15)
            throw ConfigError(where(key) + ": key `" + key + "`: expected an integer, got '" + get_string(key) + "'");
        return static_cast<long long>(v);
    }

    long long get_int(const std::string& key, long long fallback) const { return has(key) ? get_int(key) : fallback; }

    std::uint64_t get_seed(const std::string& key, std::uint64_t fallback = 0) const {
        if (!has(key)) return fallback;
        const auto v = get_int(key);
        if (v < 0) throw ConfigError(where(key) + ": key `" + key + "`: seed must be nonnegative");
        return static_cast<std::uint64_t>(v);
    }

    /// Comma-separated list of numbers.
    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        for (const auto& part : io::split(get_string(key)))
            out.push_back(io::parse_double(part, where(key) + ": key `" + key + "`"));
        return out;
    }

    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
        return has(key) ? get_doubles(key) : fallback;
    }

    /// All keys in insertion order, as "section.key".
    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [name, node] : tree_) {
            if (node.empty()) out.push_back(name);
            for (const auto& [sub, leaf] : node) out.push_back(name + "." + sub);
        }
        return out;
    }

private:
    static std::string trim(std::string s) {
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
        std::size_t i = 0;
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        return s.substr(i);
    }

    boost::property_tree::ptree tree_;
    std::string source_;
    std::map<std::string, int> lines_;
};

}  // namespace pdelin
