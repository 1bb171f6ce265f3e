// Minimal TOML reader for configuration files, converting to a json document.
// Covers the subset config files actually use: `key = value` pairs, [table]
// and [[array-of-table]] headers with dotted paths, basic strings, integers,
// floats, booleans, and # comments. Inline tables, arrays, dates and
// multi-line strings are out of scope and rejected loudly.

#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolscope/errors.hpp"

namespace poolscope {
namespace toml {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
        if (c == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

inline Error bad(std::size_t line_no, const std::string& reason) {
    return Error("InvalidConfig", "line " + std::to_string(line_no) + ": " + reason);
}

inline std::string parse_basic_string(const std::string& raw, std::size_t line_no) {
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        char c = raw[i];
        if (c != '\\') {
            out += c;
            continue;
        }
        if (i + 2 >= raw.size()) throw bad(line_no, "dangling escape");
        char e = raw[++i];
        switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: throw bad(line_no, std::string("unsupported escape \\") + e);
        }
    }
    return out;
}

inline nlohmann::json parse_value(const std::string& raw, std::size_t line_no) {
    if (raw.empty()) throw bad(line_no, "missing value");
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw bad(line_no, "unterminated string");
        return parse_basic_string(raw, line_no);
    }
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.front() == '[' || raw.front() == '{')
        throw bad(line_no, "arrays and inline tables are not supported");

    std::string plain;
    for (char c : raw)
        if (c != '_') plain += c;
    bool floaty = false;
    for (char c : plain)
        if (c == '.' || c == 'e' || c == 'E') floaty = true;
    try {
        std::size_t used = 0;
        if (floaty) {
            double v = std::stod(plain, &used);
            if (used != plain.size()) throw std::invalid_argument(plain);
            return v;
        }
        long long v = std::stoll(plain, &used, 10);
        if (used != plain.size()) throw std::invalid_argument(plain);
        return v;
    } catch (const std::exception&) {
        throw bad(line_no, "cannot parse value " + raw);
    }
}

inline std::vector<std::string> split_path(const std::string& raw, std::size_t line_no) {
    std::vector<std::string> parts;
    std::string part;
    for (char c : raw) {
        if (c == '.') {
            parts.push_back(trim(part));
            part.clear();
        } else {
            part += c;
        }
    }
    parts.push_back(trim(part));
    for (const auto& p : parts)
        if (p.empty()) throw bad(line_no, "empty key segment in " + raw);
    return parts;
}

inline nlohmann::json* navigate(nlohmann::json& root, const std::vector<std::string>& path,
                                std::size_t line_no) {
    nlohmann::json* at = &root;
    for (const auto& part : path) {
        if (at->is_array()) at = &at->back();
        if (!at->is_object()) throw bad(line_no, "cannot descend into " + part);
        if (!at->contains(part)) (*at)[part] = nlohmann::json::object();
        at = &(*at)[part];
    }
    if (at->is_array()) at = &at->back();
    return at;
}

} // namespace detail

inline nlohmann::json parse(const std::string& text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* current = &root;

    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(detail::strip_comment(line));
        if (line.empty()) continue;

        if (line.front() == '[') {
            bool many = line.rfind("[[", 0) == 0;
            std::size_t close = line.find(many ? "]]" : "]");
            if (close == std::string::npos ||
                detail::trim(line.substr(close + (many ? 2 : 1))) != "")
                throw detail::bad(line_no, "malformed table header");
            auto path = detail::split_path(
                line.substr(many ? 2 : 1, close - (many ? 2 : 1)), line_no);
            if (many) {
                auto parent_path = path;
                parent_path.pop_back();
                nlohmann::json* parent = detail::navigate(root, parent_path, line_no);
                auto& slot = (*parent)[path.back()];
                if (slot.is_null() || (slot.is_object() && slot.empty()))
                    slot = nlohmann::json::array();
                if (!slot.is_array())
                    throw detail::bad(line_no, path.back() + " is not an array of tables");
                slot.push_back(nlohmann::json::object());
                current = &slot.back();
            } else {
                current = detail::navigate(root, path, line_no);
            }
            continue;
        }

        auto eq = line.find('=');
        if (eq == std::string::npos) throw detail::bad(line_no, "expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        if (key.size() >= 2 && key.front() == '"' && key.back() == '"')
            key = detail::parse_basic_string(key, line_no);
        if (key.empty()) throw detail::bad(line_no, "empty key");
        std::string value = detail::trim(line.substr(eq + 1));
        (*current)[key] = detail::parse_value(value, line_no);
    }
    return root;
}

inline nlohmann::json load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse(buf.str());
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.message());
    }
}

// config files may be either format, keyed off the extension
inline nlohmann::json load_json_or_toml(const std::string& path) {
    if (path.size() >= 5 && path.rfind(".toml") == path.size() - 5) return load(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw Error("InvalidConfig", path + ": " + e.what());
    }
}

} // namespace toml
} // namespace poolscope
