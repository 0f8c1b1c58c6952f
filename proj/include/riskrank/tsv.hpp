#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace riskrank::tsv {

/// Formats a real with 9 significant digits (printf "%.9g").
std::string format_real(double value);

/// Parses a finite real; throws ParseError mentioning `where` otherwise.
double parse_real(std::string_view token, std::string_view where);
long long parse_int(std::string_view token, std::string_view where);

std::vector<std::string> split_tabs(std::string_view line);
std::string join_tabs(const std::vector<std::string>& fields);

/// A whole TSV file: mandatory header row plus data rows.
struct Table {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index of `name`, or throws ParseError naming the file.
    std::size_t column(std::string_view name) const;
    /// "path:line" for data row `row` (header is line 1).
    std::string where(std::size_t row) const;
};

Table read_table(const std::string& path);
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

/// Sectioned TSV: `[name]` lines open a section; following non-blank lines
/// are tab-separated rows belonging to it.
using Sections = std::map<std::string, std::vector<std::vector<std::string>>>;

Sections read_sections(const std::string& path);
void write_sections(std::ostream& out, const std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>>& sections);

/// key=value parsing shared by the workload manifest and the run config.
/// Returns (line number, key, value) triples in file order; `#` comments and
/// blank lines are skipped.
struct KeyValue {
    std::size_t line;
    std::string key;
    std::string value;
};
std::vector<KeyValue> read_key_values(const std::string& path);

}  // namespace riskrank::tsv
