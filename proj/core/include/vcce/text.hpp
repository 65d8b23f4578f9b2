#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vcce {

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Shortest decimal text that round-trips the double exactly (std::to_chars).
// Locale-independent; NaN renders as the empty string so CSV cells stay blank.
std::string format_double(double v);

// Fixed-point text with `precision` digits after the point. Used where byte
// stability matters more than round-tripping (SVG coordinates).
std::string format_fixed(double v, int precision);

// Strict full-token parses; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Write via temp file + rename so partially written artifacts never appear
// under the final name.
void write_text_file_atomic(const std::string& path, const std::string& content);

}  // namespace vcce
