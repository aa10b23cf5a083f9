#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace primes::text {

bool is_valid_utf8(std::string_view bytes);

std::string_view trim(std::string_view s);
std::string_view rtrim(std::string_view s);
std::string to_lower(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Number of whitespace-separated words. Used as the mock provider's token count.
std::size_t word_count(std::string_view s);

/// CRLF/CR become LF and trailing whitespace is removed from every line and
/// from the end of the text.
std::string normalize_lines(std::string_view s);

/// Shortest round-trip decimal form, always with a decimal point ("0.0", "0.5").
std::string format_double(double value);

bool starts_with(std::string_view s, std::string_view prefix);

} // namespace primes::text

namespace primes::fs {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Appends one line (a newline is added) and flushes.
void append_line(const std::filesystem::path& path, std::string_view line);

} // namespace primes::fs
