#include "svia/config.hpp"

#include "svia/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace svia {

namespace {

std::string trim(std::string_view s) {
    auto begin = s.begin();
    auto end = s.end();
    while (begin != end && std::isspace(static_cast<unsigned char>(*begin))) {
        ++begin;
    }
    while (end != begin && std::isspace(static_cast<unsigned char>(*(end - 1)))) {
        --end;
    }
    return std::string(begin, end);
}

} // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
    KeyValueConfig config;
    config.base_dir_ = base_dir;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_number) + ": expected 'key = value'");
        }
        std::string key = trim(std::string_view(stripped).substr(0, eq));
        if (key.empty()) {
            throw ValidationError("config line " + std::to_string(line_number) + ": empty key");
        }
        config.values_[key] = trim(std::string_view(stripped).substr(eq + 1));
    }
    return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.parent_path());
}

std::optional<std::string> KeyValueConfig::find(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto value = find(key);
    if (!value) {
        return fallback;
    }
    try {
        std::size_t used = 0;
        const double parsed = std::stod(*value, &used);
        if (used != value->size()) {
            throw std::invalid_argument(*value);
        }
        return parsed;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': not a number: " + *value);
    }
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    const auto value = find(key);
    if (!value) {
        return fallback;
    }
    long long parsed = 0;
    const auto [ptr, ec] = std::from_chars(value->data(), value->data() + value->size(), parsed);
    if (ec != std::errc{} || ptr != value->data() + value->size()) {
        throw ValidationError("config key '" + key + "': not an integer: " + *value);
    }
    return parsed;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto value = find(key);
    if (!value) {
        return fallback;
    }
    std::string lower = *value;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "true" || lower == "1" || lower == "yes" || lower == "on") {
        return true;
    }
    if (lower == "false" || lower == "0" || lower == "no" || lower == "off") {
        return false;
    }
    throw ValidationError("config key '" + key + "': not a boolean: " + *value);
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const {
    const auto value = find(key);
    if (!value) {
        return fallback;
    }
    std::vector<std::string> items;
    std::stringstream in(*value);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            items.push_back(item);
        }
    }
    return items;
}

std::filesystem::path KeyValueConfig::get_path(const std::string& key) const {
    const auto value = find(key);
    if (!value || value->empty()) {
        return {};
    }
    std::filesystem::path path(*value);
    if (path.is_relative() && !base_dir_.empty()) {
        path = base_dir_ / path;
    }
    return path;
}

std::map<std::string, std::string> KeyValueConfig::section(const std::string& prefix) const {
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : values_) {
        if (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0) {
            out[key.substr(prefix.size())] = value;
        }
    }
    return out;
}

std::string KeyValueConfig::canonical_text() const {
    std::string out;
    for (const auto& [key, value] : values_) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    }
    return out;
}

std::string KeyValueConfig::hash() const { return to_hex(fnv1a64(canonical_text())); }

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t value) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

} // namespace svia
