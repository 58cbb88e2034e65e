#include "widescan/text.hpp"

#include "widescan/common.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace widescan {

std::string format_double(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    require(ec == std::errc{}, "format_double: conversion failed");
    return {buf, end};
}

double parse_double(std::string_view text)
{
    if (text == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (text == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    if (text == "-inf") {
        return -std::numeric_limits<double>::infinity();
    }
    double v = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    require(ec == std::errc{} && end == text.data() + text.size(),
            "not a number: '" + std::string(text) + "'");
    return v;
}

long long parse_int(std::string_view text)
{
    long long v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    require(ec == std::errc{} && end == text.data() + text.size(),
            "not an integer: '" + std::string(text) + "'");
    return v;
}

std::vector<std::string> split(std::string_view line, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace widescan
