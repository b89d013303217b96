#include "fsnet/kvconfig.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fsnet {

std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

std::string fnv1a_hex(std::string_view bytes)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

KeyValues KeyValues::parse(std::string_view text, const std::string& source)
{
    KeyValues kv;
    kv.source_ = source;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw KeyValueError(source + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + t + "'");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        if (key.empty())
            throw KeyValueError(source + ":" + std::to_string(line_no) + ": empty key");
        kv.entries_[key] = trim(std::string_view(t).substr(eq + 1));
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw KeyValueError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

void KeyValues::set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

bool KeyValues::has(const std::string& key) const { return entries_.count(key) != 0; }

const std::string* KeyValues::find(const std::string& key) const
{
    used_.insert(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const
{
    const auto* v = find(key);
    return v ? *v : fallback;
}

double KeyValues::get_real(const std::string& key, double fallback) const
{
    const auto* v = find(key);
    if (!v)
        return fallback;
    try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size())
            throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw KeyValueError(source_ + ": key '" + key + "': '" + *v + "' is not a number");
    }
}

long long KeyValues::get_int(const std::string& key, long long fallback) const
{
    const auto* v = find(key);
    if (!v)
        return fallback;
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size())
        throw KeyValueError(source_ + ": key '" + key + "': '" + *v + "' is not an integer");
    return out;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const
{
    const auto* v = find(key);
    if (!v)
        return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on")
        return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off")
        return false;
    throw KeyValueError(source_ + ": key '" + key + "': '" + *v + "' is not a boolean");
}

std::vector<std::string> KeyValues::get_list(const std::string& key, const std::vector<std::string>& fallback) const
{
    const auto* v = find(key);
    if (!v)
        return fallback;
    std::vector<std::string> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

KeyValues KeyValues::with_prefix(const std::string& prefix) const
{
    KeyValues out;
    out.source_ = source_;
    for (const auto& [k, v] : entries_) {
        if (k.rfind(prefix, 0) == 0) {
            used_.insert(k);
            out.entries_[k.substr(prefix.size())] = v;
        }
    }
    return out;
}

std::vector<std::string> KeyValues::unused_keys() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (!used_.count(k))
            out.push_back(k);
    return out;
}

} // namespace fsnet
