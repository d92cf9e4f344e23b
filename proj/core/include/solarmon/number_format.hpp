#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace solarmon {

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
void append_double(std::string& out, double v);

// Whole-string parse; rejects leading '+', whitespace and trailing bytes.
std::optional<double> parse_double(std::string_view s);

}  // namespace solarmon
