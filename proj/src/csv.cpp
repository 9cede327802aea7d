#include "weedout/csv.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "weedout/errors.hpp"

namespace weedout::csv {

std::string format_double(double v) {
    if (std::isnan(v)) return {};
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

double parse_double(std::string_view field) {
    if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        throw InvalidArgument("not a number: '" + std::string(field) + "'");
    }
    return v;
}

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<std::vector<std::string>> parse(std::string_view text, std::string_view expected_header) {
    std::vector<std::vector<std::string>> rows;
    bool header_seen = false;
    std::size_t columns = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        start = end + 1;
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != expected_header) {
                throw InvalidArgument("unexpected CSV header '" + std::string(line) + "'");
            }
            columns = split_line(line).size();
            header_seen = true;
            continue;
        }
        auto fields = split_line(line);
        if (fields.size() != columns) {
            throw InvalidArgument("CSV row has " + std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(columns));
        }
        rows.push_back(std::move(fields));
    }
    if (!header_seen) throw InvalidArgument("CSV document has no header");
    return rows;
}

}  // namespace weedout::csv
