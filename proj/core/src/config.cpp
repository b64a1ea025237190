#include "pcw/config.hpp"

#include "pcw/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace pcw {
namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Comments start with '#' or ';' at line start or after whitespace.
std::string strip_comment(const std::string& line)
{
    for (std::size_t i = 0; i < line.size(); ++i) {
        if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
            return line.substr(0, i);
        }
    }
    return line;
}

} // namespace

bool parse_double(const std::string& text, double& out)
{
    const std::string t = trim(text);
    if (t.empty()) {
        return false;
    }
    const char* begin = t.data();
    if (*begin == '+') {
        ++begin;
    }
    const auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), out);
    return ec == std::errc{} && ptr == t.data() + t.size();
}

bool parse_int(const std::string& text, long long& out)
{
    const std::string t = trim(text);
    if (t.empty()) {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    return ec == std::errc{} && ptr == t.data() + t.size();
}

Ini Ini::parse(const std::string& text, const std::string& source)
{
    Ini ini;
    ini.source_ = source;
    ini.text_ = text;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) {
            continue;
        }
        const std::string here = source + ":" + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(here + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError(here + ": empty section name");
            }
            if (ini.section_lines_.count(section)) {
                throw ConfigError(here + ": duplicate section [" + section + "]");
            }
            ini.section_lines_[section] = line_no;
            ini.order_.push_back(section);
            ini.data_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(here + ": expected key = value");
        }
        if (section.empty()) {
            throw ConfigError(here + ": key outside of any section");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(here + ": empty key");
        }
        auto& entries = ini.data_[section];
        if (entries.count(key)) {
            throw ConfigError(here + ": duplicate key '" + key + "' in [" + section + "]");
        }
        entries[key] = Entry{trim(line.substr(eq + 1)), line_no};
    }
    return ini;
}

Ini Ini::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read config file " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

bool Ini::has_section(const std::string& section) const
{
    return data_.count(section) > 0;
}

bool Ini::has(const std::string& section, const std::string& key) const
{
    const auto s = data_.find(section);
    return s != data_.end() && s->second.count(key) > 0;
}

std::vector<std::string> Ini::sections() const
{
    return order_;
}

std::vector<std::string> Ini::keys(const std::string& section) const
{
    std::vector<std::string> out;
    const auto s = data_.find(section);
    if (s != data_.end()) {
        for (const auto& [k, v] : s->second) {
            out.push_back(k);
        }
    }
    return out;
}

std::string Ini::where(const std::string& section, const std::string& key) const
{
    const auto s = data_.find(section);
    if (s != data_.end()) {
        const auto e = s->second.find(key);
        if (e != s->second.end()) {
            return source_ + ":" + std::to_string(e->second.line);
        }
    }
    return source_;
}

int Ini::section_line(const std::string& section) const
{
    const auto s = section_lines_.find(section);
    return s == section_lines_.end() ? 0 : s->second;
}

std::string Ini::get_string(const std::string& section, const std::string& key, const std::string& fallback) const
{
    const auto s = data_.find(section);
    if (s == data_.end()) {
        return fallback;
    }
    const auto e = s->second.find(key);
    return e == s->second.end() ? fallback : e->second.value;
}

double Ini::get_double(const std::string& section, const std::string& key, double fallback) const
{
    if (!has(section, key)) {
        return fallback;
    }
    double v = 0;
    const std::string text = get_string(section, key, "");
    if (!parse_double(text, v)) {
        throw ConfigError(where(section, key) + ": [" + section + "] " + key + " = '" + text + "' is not a number");
    }
    return v;
}

long long Ini::get_int(const std::string& section, const std::string& key, long long fallback) const
{
    if (!has(section, key)) {
        return fallback;
    }
    long long v = 0;
    const std::string text = get_string(section, key, "");
    if (!parse_int(text, v)) {
        throw ConfigError(where(section, key) + ": [" + section + "] " + key + " = '" + text + "' is not an integer");
    }
    return v;
}

bool Ini::get_bool(const std::string& section, const std::string& key, bool fallback) const
{
    if (!has(section, key)) {
        return fallback;
    }
    std::string text = get_string(section, key, "");
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
    if (text == "true" || text == "yes" || text == "on" || text == "1") {
        return true;
    }
    if (text == "false" || text == "no" || text == "off" || text == "0") {
        return false;
    }
    throw ConfigError(where(section, key) + ": [" + section + "] " + key + " = '" + text + "' is not a boolean");
}

void Ini::check_keys(const std::string& section, const std::set<std::string>& allowed) const
{
    const auto s = data_.find(section);
    if (s == data_.end()) {
        return;
    }
    for (const auto& [key, entry] : s->second) {
        if (!allowed.count(key)) {
            throw ConfigError(source_ + ":" + std::to_string(entry.line) + ": unknown key '" + key + "' in [" +
                              section + "]");
        }
    }
}

} // namespace pcw
