#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dqa::text {

std::vector<std::string> split(std::string_view s, char delim);
std::string_view trim(std::string_view s);

// Shortest representation that parses back to the identical double.
std::string format_double(double v);
// Fixed precision, for human-facing tables.
std::string format_fixed(double v, int precision);

// Strict parse of the whole (trimmed) field; throws ParseError with `what` as context.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

}  // namespace dqa::text
