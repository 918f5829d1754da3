#pragma once

#include <charconv>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kcobra {

// Bad or malformed input data (files, CSV schemas, model containers).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failure during fitting or optimization (non-finite values,
// optimizer abort).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest round-trip decimal representation of a double.
inline std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw DataError("invalid numeric field: '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace kcobra
