#pragma once

// Flat key = value configuration with flag > environment > file precedence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "halucheck/errors.hpp"
#include "halucheck/unicode.hpp"

namespace halucheck {

class ConfigFile {
public:
    /// Lines of `key = value`; '#' starts a comment line. Keys are case-sensitive.
    static ConfigFile parse(std::string_view text, std::string_view origin = "config") {
        ConfigFile c;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t eol = std::min(text.find('\n', pos), text.size());
            std::string_view line = unicode::trim(text.substr(pos, eol - pos));
            ++line_no;
            pos = eol + 1;
            if (line.empty() || line.front() == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
            std::string key(unicode::trim(line.substr(0, eq)));
            std::string value(unicode::trim(line.substr(eq + 1)));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
            if (key.empty()) throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
            c.values_[std::move(key)] = std::move(value);
        }
        return c;
    }

    static ConfigFile load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.string());
    }

    std::optional<std::string> get(std::string_view key) const {
        auto it = values_.find(key);
        return it == values_.end() ? std::nullopt : std::optional<std::string>(it->second);
    }

    const std::map<std::string, std::string, std::less<>>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string, std::less<>> values_;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

/// Resolves one setting: command-line flag, then environment variable, then config file key.
class Settings {
public:
    Settings(ConfigFile file = {}, EnvLookup env = process_env) : file_(std::move(file)), env_(std::move(env)) {}

    std::optional<std::string> get(const std::optional<std::string>& flag, std::string_view env_var,
                                   std::string_view key) const {
        if (flag) return flag;
        if (!env_var.empty() && env_)
            if (auto v = env_(std::string(env_var))) return v;
        return file_.get(key);
    }

    std::string get_or(const std::optional<std::string>& flag, std::string_view env_var, std::string_view key,
                       std::string fallback) const {
        return get(flag, env_var, key).value_or(std::move(fallback));
    }

private:
    ConfigFile file_;
    EnvLookup env_;
};

}  // namespace halucheck
