#include "riskrank/tsv.hpp"

#include "riskrank/common.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace riskrank::tsv {

std::string format_real(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

double parse_real(std::string_view token, std::string_view where) {
    double value = 0.0;
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || token.empty()) {
        throw ParseError(std::string(where) + ": not a number: '" + std::string(token) + "'");
    }
    if (!std::isfinite(value)) {
        throw ParseError(std::string(where) + ": non-finite value '" + std::string(token) + "'");
    }
    return value;
}

long long parse_int(std::string_view token, std::string_view where) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty()) {
        throw ParseError(std::string(where) + ": not an integer: '" + std::string(token) + "'");
    }
    return value;
}

std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

std::string join_tabs(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += '\t';
        out += fields[i];
    }
    return out;
}

namespace {

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw ParseError(path + ":1: missing column '" + std::string(name) + "'");
}

std::string Table::where(std::size_t row) const { return path + ":" + std::to_string(row + 2); }

Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    Table table;
    table.path = path;
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
    strip_cr(line);
    table.header = split_tabs(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != table.header.size()) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(table.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    return table;
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << join_tabs(header) << '\n';
    for (const auto& row : rows) out << join_tabs(row) << '\n';
    if (!out) throw Error("write failed: " + path);
}

Sections read_sections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    Sections sections;
    std::string line;
    std::string current;
    bool open = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            current = line.substr(1, line.size() - 2);
            sections[current];
            open = true;
            continue;
        }
        if (!open) throw ParseError(path + ":" + std::to_string(lineno) + ": row outside any section");
        sections[current].push_back(split_tabs(line));
    }
    return sections;
}

void write_sections(std::ostream& out,
                    const std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>>& sections) {
    bool first = true;
    for (const auto& [name, rows] : sections) {
        if (!first) out << '\n';
        first = false;
        out << '[' << name << "]\n";
        for (const auto& row : rows) out << join_tabs(row) << '\n';
    }
}

std::vector<KeyValue> read_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read " + path);
    std::vector<KeyValue> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        const auto begin = line.find_first_not_of(" \t");
        if (begin == std::string::npos || line[begin] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            if (b == std::string::npos) return std::string{};
            const auto e = s.find_last_not_of(" \t");
            return s.substr(b, e - b + 1);
        };
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
        out.push_back({lineno, std::move(key), std::move(value)});
    }
    return out;
}

}  // namespace riskrank::tsv
