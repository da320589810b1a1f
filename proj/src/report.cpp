#include "mhf/report.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "mhf/checkpoint.hpp"
#include "mhf/errors.hpp"

namespace mhf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ReportTree::ReportTree(const ReportTree& other) { *this = other; }

ReportTree& ReportTree::operator=(const ReportTree& other) {
    if (this == &other) return *this;
    entries_.clear();
    for (const Entry& e : other.entries_) {
        Entry copy{e.key, e.value, nullptr};
        if (e.child) copy.child = std::make_unique<ReportTree>(*e.child);
        entries_.push_back(std::move(copy));
    }
    return *this;
}

ReportTree::Entry* ReportTree::find(const std::string& key) {
    for (Entry& e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

const ReportTree::Entry* ReportTree::find(const std::string& key) const {
    for (const Entry& e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

ReportTree& ReportTree::section(const std::string& name) {
    if (Entry* e = find(name)) {
        if (!e->child) throw ContractError("report: '" + name + "' is a value, not a section");
        return *e->child;
    }
    entries_.push_back(Entry{name, std::nullopt, std::make_unique<ReportTree>()});
    return *entries_.back().child;
}

const ReportTree* ReportTree::find_section(const std::string& name) const {
    const Entry* e = find(name);
    return e ? e->child.get() : nullptr;
}

void ReportTree::set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find(':') != std::string::npos || key.find('\n') != std::string::npos ||
        value.find('\n') != std::string::npos) {
        throw ContractError("report: invalid key or value for '" + key + "'");
    }
    if (Entry* e = find(key)) {
        if (e->child) throw ContractError("report: '" + key + "' is a section, not a value");
        e->value = value;
        return;
    }
    entries_.push_back(Entry{key, value, nullptr});
}

void ReportTree::set(const std::string& key, double value) { set(key, format_number(value)); }

void ReportTree::set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

std::optional<std::string> ReportTree::get(const std::string& path) const {
    const ReportTree* node = this;
    std::string rest = path;
    for (;;) {
        const auto dot = rest.find('.');
        if (dot == std::string::npos) {
            const Entry* e = node->find(rest);
            if (!e || !e->value) return std::nullopt;
            return e->value;
        }
        node = node->find_section(rest.substr(0, dot));
        if (!node) return std::nullopt;
        rest = rest.substr(dot + 1);
    }
}

std::optional<double> ReportTree::get_number(const std::string& path) const {
    auto v = get(path);
    if (!v) return std::nullopt;
    return parse_double(*v);
}

void ReportTree::write(std::ostream& out, int indent) const {
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    for (const Entry& e : entries_) {
        if (e.child) {
            out << pad << e.key << ":\n";
            e.child->write(out, indent + 2);
        } else {
            out << pad << e.key << ": " << *e.value << '\n';
        }
    }
}

std::string ReportTree::to_text() const {
    std::ostringstream out;
    write(out);
    return out.str();
}

ReportTree ReportTree::parse(std::istream& in) {
    ReportTree root;
    std::vector<std::pair<std::size_t, ReportTree*>> stack{{0, &root}};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::size_t indent = line.find_first_not_of(' ');
        while (stack.size() > 1 && indent < stack.back().first) stack.pop_back();
        if (indent != stack.back().first) {
            throw ParseError("report line " + std::to_string(line_no) + ": unexpected indentation");
        }
        const std::string body = line.substr(indent);
        const auto colon = body.find(':');
        if (colon == std::string::npos) {
            throw ParseError("report line " + std::to_string(line_no) + ": missing ':'");
        }
        const std::string key = body.substr(0, colon);
        if (colon + 1 == body.size()) {
            ReportTree& child = stack.back().second->section(key);
            stack.emplace_back(indent + 2, &child);
        } else {
            if (body.size() < colon + 2 || body[colon + 1] != ' ') {
                throw ParseError("report line " + std::to_string(line_no) + ": expected ': ' after key");
            }
            stack.back().second->set(key, body.substr(colon + 2));
        }
    }
    return root;
}

ReportTree ReportTree::parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

bool operator==(const ReportTree& a, const ReportTree& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
        const auto& x = a.entries_[i];
        const auto& y = b.entries_[i];
        if (x.key != y.key || x.value != y.value || bool(x.child) != bool(y.child)) return false;
        if (x.child && !(*x.child == *y.child)) return false;
    }
    return true;
}

std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
        }
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

}  // namespace mhf
