#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace weedout::csv {

/// Shortest decimal that parses back to the same double ('.' separator,
/// locale independent). NaN is written as an empty field.
std::string format_double(double v);

/// Inverse of format_double; an empty field reads as NaN.
double parse_double(std::string_view field);

std::vector<std::string> split_line(std::string_view line);

/// Rows of a header-first CSV document; the header is checked against
/// `expected_header` and dropped.
std::vector<std::vector<std::string>> parse(std::string_view text, std::string_view expected_header);

}  // namespace weedout::csv
