#pragma once

// Sectioned key = value configuration files with line tracking, so that a
// bad value can be reported as file:line.

#include <map>
#include <set>
#include <string>
#include <vector>

namespace pcw {

class Ini {
public:
    struct Entry {
        std::string value;
        int line = 0;
    };

    static Ini parse(const std::string& text, const std::string& source = "<string>");
    static Ini load(const std::string& path);

    const std::string& source() const { return source_; }
    const std::string& text() const { return text_; }

    bool has_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;
    std::vector<std::string> sections() const;
    std::vector<std::string> keys(const std::string& section) const;

    /// "file:line" of a key, or "file" when absent.
    std::string where(const std::string& section, const std::string& key) const;
    /// Line of the section header, 0 when absent.
    int section_line(const std::string& section) const;

    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    /// Throws ConfigError naming the first key of `section` not in `allowed`.
    void check_keys(const std::string& section, const std::set<std::string>& allowed) const;

private:
    std::string source_;
    std::string text_;
    std::map<std::string, std::map<std::string, Entry>> data_;
    std::map<std::string, int> section_lines_;
    std::vector<std::string> order_;
};

/// Strict full-string number parsing; false on any leftover characters.
bool parse_double(const std::string& text, double& out);
bool parse_int(const std::string& text, long long& out);

} // namespace pcw
