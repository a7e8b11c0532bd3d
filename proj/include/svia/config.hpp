#pragma once

// Flat, namespaced key-value configuration:
//
//   # comment
//   sampler.steps = 50
//   prompt.person = a photo of pedestrians on a street

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace svia {

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::optional<std::string> find(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated list, entries trimmed.
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
    /// Relative paths resolve against the directory the config was loaded from.
    std::filesystem::path get_path(const std::string& key) const;

    /// Keys with the given prefix, prefix stripped.
    std::map<std::string, std::string> section(const std::string& prefix) const;

    const std::map<std::string, std::string>& entries() const noexcept { return values_; }
    const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

    /// Sorted "key = value" lines; stable across runs.
    std::string canonical_text() const;
    /// Hex FNV-1a 64 of canonical_text().
    std::string hash() const;

private:
    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xCBF29CE484222325ULL);
std::string to_hex(std::uint64_t value);

} // namespace svia
