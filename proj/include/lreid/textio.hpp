#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <system_error>

#include "lreid/errors.hpp"

namespace lreid {

// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw NumericError("parse_double: cannot parse '" + s + "'");
    return v;
}

// Fixed 4-decimal rendering for reported metrics.
inline std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
}

} // namespace lreid
