#pragma once

// Key-value configuration files.
//
//   # comment
//   key = value
//
// Keys may contain spaces and dots ("synonym.cystic area"). Later
// occurrences of a key override earlier ones; the order of first
// appearance is kept so prefix scans are deterministic.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cadx/error.hpp"

namespace cadx {

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    s = trim(s);
    long long v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
    return v;
}

}  // namespace detail

class Config {
public:
    Config() = default;

    static Config parse(std::string_view text, const std::string& origin = "<string>") {
        Config cfg;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            auto nl = text.find('\n', pos);
            if (nl == std::string_view::npos) nl = text.size();
            auto line = detail::trim(text.substr(pos, nl - pos));
            pos = nl + 1;
            ++line_no;
            if (line.empty() || line.front() == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                fail(ErrorCode::BadConfig, origin + ":" + std::to_string(line_no) + ": expected key = value",
                     line_no);
            }
            auto key = detail::trim(line.substr(0, eq));
            auto value = detail::trim(line.substr(eq + 1));
            if (key.empty()) {
                fail(ErrorCode::BadConfig, origin + ":" + std::to_string(line_no) + ": empty key", line_no);
            }
            cfg.set(std::string(key), std::string(value));
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) fail(ErrorCode::FileNotFound, "cannot open config " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        auto cfg = parse(ss.str(), path.string());
        cfg.base_dir_ = path.parent_path();
        return cfg;
    }

    void set(std::string key, std::string value) {
        for (auto& [k, v] : entries_) {
            if (k == key) {
                v = std::move(value);
                return;
            }
        }
        entries_.emplace_back(std::move(key), std::move(value));
    }

    [[nodiscard]] bool contains(std::string_view key) const { return find(key) != nullptr; }

    [[nodiscard]] std::optional<std::string> get(std::string_view key) const {
        if (const auto* v = find(key)) return *v;
        return std::nullopt;
    }

    [[nodiscard]] std::string get_or(std::string_view key, std::string fallback) const {
        if (const auto* v = find(key)) return *v;
        return fallback;
    }

    [[nodiscard]] double get_double(std::string_view key, double fallback) const {
        const auto* v = find(key);
        if (!v) return fallback;
        auto d = detail::parse_double(*v);
        if (!d) fail(ErrorCode::BadConfig, "key '" + std::string(key) + "' is not a number: " + *v);
        return *d;
    }

    [[nodiscard]] long long get_int(std::string_view key, long long fallback) const {
        const auto* v = find(key);
        if (!v) return fallback;
        auto d = detail::parse_int(*v);
        if (!d) fail(ErrorCode::BadConfig, "key '" + std::string(key) + "' is not an integer: " + *v);
        return *d;
    }

    [[nodiscard]] bool get_bool(std::string_view key, bool fallback) const {
        const auto* v = find(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
        if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
        fail(ErrorCode::BadConfig, "key '" + std::string(key) + "' is not a boolean: " + *v);
    }

    /// (suffix, value) for every key starting with `prefix`, in file order.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> with_prefix(std::string_view prefix) const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [k, v] : entries_) {
            if (k.size() > prefix.size() && std::string_view(k).substr(0, prefix.size()) == prefix) {
                out.emplace_back(k.substr(prefix.size()), v);
            }
        }
        return out;
    }

    /// Resolves a path-valued entry relative to the config file's directory.
    [[nodiscard]] std::optional<std::filesystem::path> get_path(std::string_view key) const {
        auto v = get(key);
        if (!v) return std::nullopt;
        std::filesystem::path p(*v);
        if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
        return p;
    }

    [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    [[nodiscard]] const std::string* find(std::string_view key) const {
        for (const auto& [k, v] : entries_) {
            if (k == key) return &v;
        }
        return nullptr;
    }

    std::vector<std::pair<std::string, std::string>> entries_;
    std::filesystem::path base_dir_;
};

}  // namespace cadx
