#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mhf {

/// Ordered key/value tree serialized as indented text:
///
///     train:
///       epochs: 200
///       best_epoch: 17
///     eval:
///       distortion: 0.1234
///
/// Leaves hold strings; numbers are written with 17 significant digits so
/// parsing the text back reproduces every value exactly.
class ReportTree {
public:
    ReportTree() = default;
    ReportTree(const ReportTree& other);
    ReportTree& operator=(const ReportTree& other);
    ReportTree(ReportTree&&) noexcept = default;
    ReportTree& operator=(ReportTree&&) noexcept = default;

    /// Child section, created on first use.
    ReportTree& section(const std::string& name);
    const ReportTree* find_section(const std::string& name) const;

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, const char* value) { set(key, std::string(value)); }
    void set(const std::string& key, double value);
    void set(const std::string& key, std::uint64_t value);
    void set(const std::string& key, int value) { set(key, static_cast<std::uint64_t>(value)); }
    void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

    /// Leaf lookup by dotted path, e.g. "eval.distortion".
    std::optional<std::string> get(const std::string& path) const;
    std::optional<double> get_number(const std::string& path) const;

    void write(std::ostream& out, int indent = 0) const;
    std::string to_text() const;
    static ReportTree parse(std::istream& in);
    static ReportTree parse_text(const std::string& text);

    friend bool operator==(const ReportTree& a, const ReportTree& b);

private:
    struct Entry {
        std::string key;
        std::optional<std::string> value;
        std::unique_ptr<ReportTree> child;
    };
    Entry* find(const std::string& key);
    const Entry* find(const std::string& key) const;

    std::vector<Entry> entries_;
};

/// Formats a double with 17 significant digits.
std::string format_number(double v);

/// Flat `key = value` text with `#` comments, as used by config files.
std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source);

}  // namespace mhf
