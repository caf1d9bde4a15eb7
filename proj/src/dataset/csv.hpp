#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sleepeff::dataset::detail {

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no);
bool read_line(std::istream& in, std::string& line);
std::string_view trim(std::string_view s);
// Empty string or "NA".
bool is_missing_token(std::string_view s);
std::optional<double> parse_number(std::string_view s);
// Shortest round-trip representation; NaN prints as "NA".
std::string format_number(double v);

}  // namespace sleepeff::dataset::detail
