#include "neat/config.hpp"

#include <charconv>
#include <fstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "neat/error.hpp"

namespace neat {

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source_name) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(fmt::format("{}: {}", source_name, e.message()));
    }
    KeyValueConfig config;
    config.source_ = source_name;
    for (const auto& [key, node] : tree) {
        if (!node.empty()) {
            throw ParseError(fmt::format("{}: sections are not supported ('[{}]')", source_name, key));
        }
        config.values_[key] = node.data();
    }
    return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open config '{}'", path.string()));
    }
    return parse(in, path.string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    double out{};
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError(fmt::format("{}: '{}' must be a number, got '{}'", source_, key, *v));
    }
    return out;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    long long out{};
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError(fmt::format("{}: '{}' must be an integer, got '{}'", source_, key, *v));
    }
    return out;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_) {
        if (!known.contains(key)) {
            throw ConfigError(fmt::format("{}: unknown key '{}'", source_, key));
        }
    }
}

}  // namespace neat
