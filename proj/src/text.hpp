#pragma once

// Internal text helpers shared by the readers and writers.

#include <string>
#include <string_view>
#include <vector>

namespace tailbreak::detail {

std::vector<std::string> split(std::string_view line, char delimiter);
std::string_view trim(std::string_view s);
std::string unquote(std::string_view s);

// Shortest representation that round-trips exactly.
std::string format_double(double v);
// Strict: the whole (trimmed) field must be consumed.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

}  // namespace tailbreak::detail
