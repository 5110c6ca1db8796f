#pragma once

#include <string>
#include <vector>

namespace simdiff {

// Shortest decimal that round-trips to the same double.
std::string fmt_double(double v);

// Writes `content` to `path`, throwing on failure.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace simdiff
