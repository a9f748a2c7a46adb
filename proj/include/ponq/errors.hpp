#pragma once

#include <stdexcept>
#include <string>

namespace ponq {

// Error taxonomy mirrored by the CLI exit-code scheme:
// io_error -> 2, geometry_error -> 3, extraction_error -> 4, format_error -> 5.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : error {
    using error::error;
};

// Malformed text input (OBJ records). Carries the 1-based line number.
struct parse_error : io_error {
    parse_error(const std::string& msg, std::size_t line_number)
        : io_error("line " + std::to_string(line_number) + ": " + msg), line(line_number) {}
    std::size_t line;
};

struct geometry_error : error {
    using error::error;
};

struct extraction_error : error {
    using error::error;
};

// Binary container problems: bad magic, version, truncation.
struct format_error : error {
    using error::error;
};

}  // namespace ponq
