#pragma once

// Delimited-text helpers shared by the file readers and writers.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scm::text {

// Splits one comma-separated line. Double-quoted fields may contain commas
// and doubled quotes. A trailing '\r' is ignored.
std::vector<std::string> split_csv_line(std::string_view line);

// Quotes a field only when it contains a comma, quote, or line break.
std::string escape_csv(std::string_view field);

std::string_view trim(std::string_view s);

// Strict parsers: the whole (trimmed) field must be consumed. Return nullopt
// on malformed input so callers can attach line/column context.
std::optional<double> parse_double(std::string_view field);
std::optional<long long> parse_int(std::string_view field);

// Shortest representation that reads back to the same double.
std::string format_double(double value);

// Fixed-point display with the given number of decimals.
std::string format_fixed(double value, int decimals);

}  // namespace scm::text
