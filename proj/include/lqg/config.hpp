#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/version.hpp"

namespace lqg {

// Flat key = value configuration with [section] prefixes. Keys are stored as
// "section.key" ("key" at top level). Parsing is strict: consumers reject
// unknown keys so typos cannot silently skew a sweep.

using config_map = std::map<std::string, std::string>;

namespace config_detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

}

inline config_map parse_config(std::istream& is) {
    config_map out;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = config_detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw config_error("", "config line " + std::to_string(lineno) +
                                           ": malformed section header");
            section = config_detail::trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error("", "config line " + std::to_string(lineno) +
                                       ": expected key = value");
        std::string key = config_detail::trim(t.substr(0, eq));
        const std::string val = config_detail::trim(t.substr(eq + 1));
        if (key.empty())
            throw config_error("", "config line " + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        out[key] = val;
    }
    return out;
}

inline config_map parse_config_string(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

/// Canonical emission: top-level keys first, then sections in sorted order
/// with their keys sorted. parse(emit(c)) == c.
inline std::string emit_config(const config_map& cfg) {
    std::string out;
    for (const auto& [key, val] : cfg)
        if (key.find('.') == std::string::npos) out += key + " = " + val + "\n";
    std::string cur_section;
    for (const auto& [key, val] : cfg) {  // std::map iterates sorted
        const auto dot = key.find('.');
        if (dot == std::string::npos) continue;
        const std::string section = key.substr(0, dot);
        if (section != cur_section) {
            out += "[" + section + "]\n";
            cur_section = section;
        }
        out += key.substr(dot + 1) + " = " + val + "\n";
    }
    return out;
}

// FNV-1a 64-bit, hex digest; used for config hashes and output checksums.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline std::string config_hash(const config_map& cfg) {
    std::string canon;
    for (const auto& [k, v] : cfg) canon += k + "=" + v + "\n";
    return hex64(fnv1a(canon));
}

// ---- typed accessors --------------------------------------------------------

inline const std::string& get_raw(const config_map& cfg, const std::string& key) {
    auto it = cfg.find(key);
    if (it == cfg.end()) throw config_error(key, "missing key '" + key + "'");
    return it->second;
}

inline double get_double(const config_map& cfg, const std::string& key) {
    const auto& s = get_raw(cfg, key);
    double v;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw config_error(key, "key '" + key + "': cannot parse '" + s + "' as a number");
    return v;
}

inline std::int64_t get_int(const config_map& cfg, const std::string& key) {
    const auto& s = get_raw(cfg, key);
    std::int64_t v;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw config_error(key, "key '" + key + "': cannot parse '" + s + "' as an integer");
    return v;
}

inline bool get_bool(const config_map& cfg, const std::string& key) {
    const auto& s = get_raw(cfg, key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw config_error(key, "key '" + key + "': expected true/false");
}

inline std::vector<double> get_double_list(const config_map& cfg, const std::string& key) {
    const auto& s = get_raw(cfg, key);
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string item = config_detail::trim(s.substr(pos, comma - pos));
        if (!item.empty()) {
            double v;
            const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
            if (res.ec != std::errc{} || res.ptr != item.data() + item.size())
                throw config_error(key, "key '" + key + "': bad list element '" + item + "'");
            out.push_back(v);
        }
        pos = comma + 1;
    }
    if (out.empty()) throw config_error(key, "key '" + key + "': empty list");
    return out;
}

// ---- run manifest -----------------------------------------------------------

struct run_manifest {
    config_map config;
    std::uint64_t master_seed = 0;
    std::string hash;
    std::string tool_version = version_string;
    std::vector<std::pair<std::string, std::string>> outputs;  // (filename, checksum)
};

inline std::string emit_manifest(const run_manifest& m) {
    std::string out;
    out += "[manifest]\n";
    out += "config_hash = " + m.hash + "\n";
    out += "master_seed = " + std::to_string(m.master_seed) + "\n";
    out += "tool_version = " + std::string(m.tool_version) + "\n";
    out += "[config]\n";
    for (const auto& [k, v] : m.config) out += k + " = " + v + "\n";
    out += "[outputs]\n";
    for (const auto& [f, c] : m.outputs) out += f + " = " + c + "\n";
    return out;
}

inline run_manifest parse_manifest(const std::string& text) {
    run_manifest m;
    std::istringstream is(text);
    std::string line, section;
    while (std::getline(is, line)) {
        const std::string t = config_detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            section = t.substr(1, t.size() - 2);
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = config_detail::trim(t.substr(0, eq));
        const std::string val = config_detail::trim(t.substr(eq + 1));
        if (section == "manifest") {
            if (key == "config_hash") m.hash = val;
            if (key == "master_seed") m.master_seed = std::stoull(val);
            if (key == "tool_version") m.tool_version = val;
        } else if (section == "config") {
            m.config[key] = val;
        } else if (section == "outputs") {
            m.outputs.push_back({key, val});
        }
    }
    return m;
}

}
