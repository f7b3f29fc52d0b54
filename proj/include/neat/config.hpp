#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace neat {

/// Flat `key = value` configuration with `#` / `;` comments.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& in, const std::string& source_name = "<config>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return values_.contains(key); }
    std::optional<std::string> get(const std::string& key) const;
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;

    /// Throws ConfigError naming the first key not in `known`.
    void reject_unknown(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::string source_ = "<config>";
    std::map<std::string, std::string> values_;
};

}  // namespace neat
