#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace widescan {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);

/// Strict parse; accepts "inf"/"-inf"/"nan".
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string> split(std::string_view line, char sep);

}  // namespace widescan
