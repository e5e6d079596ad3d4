#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnkit/common.hpp"

namespace attnkit::csv {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_line(std::string_view line);

// Header-indexed CSV table held in memory. Line numbers are 1-based file lines.
class Table {
public:
    static Table read(std::istream& in, const std::string& source_name = "<stream>");
    static Table read_file(const std::string& path);

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
    std::size_t line_number(std::size_t i) const { return lines_[i]; }

    std::optional<std::size_t> find_column(std::string_view name) const;
    // Throws SchemaError naming the column when absent.
    std::size_t require_column(std::string_view name) const;

    const std::string& source() const { return source_; }

private:
    std::string source_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
    std::vector<std::size_t> lines_;
};

std::optional<double> parse_real(std::string_view field);
std::optional<long long> parse_int(std::string_view field);

// Real formatted to 6 significant digits; missing becomes an empty field.
std::string format_real(double value);
std::string format_real(const MaybeReal& value);
std::string escape(std::string_view field);

}  // namespace attnkit::csv
