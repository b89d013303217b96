#pragma once

// `key = value` text files. Blank lines and lines starting with '#' are
// ignored; later assignments override earlier ones.

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fsnet {

class KeyValueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KeyValues {
public:
    static KeyValues parse(std::string_view text, const std::string& source = "<text>");
    static KeyValues load(const std::string& path);

    void set(const std::string& key, std::string value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_real(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma separated, whitespace trimmed, empty items dropped.
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

    /// Entries whose key starts with `prefix`, with the prefix removed.
    KeyValues with_prefix(const std::string& prefix) const;

    /// Keys that no getter has looked at yet.
    std::vector<std::string> unused_keys() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }
    const std::string& source() const { return source_; }

private:
    const std::string* find(const std::string& key) const;

    std::map<std::string, std::string> entries_;
    mutable std::set<std::string> used_;
    std::string source_;
};

std::string trim(std::string_view s);

/// FNV-1a 64-bit, lowercase hex.
std::string fnv1a_hex(std::string_view bytes);

} // namespace fsnet
