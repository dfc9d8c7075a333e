#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ctiforge::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);

/// Collapses every whitespace run to a single space and trims both ends.
std::string collapse_whitespace(std::string_view s);

bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);
bool iends_with(std::string_view s, std::string_view suffix);

/// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Reads a whole file; throws Error(FileNotFound) when it cannot be opened.
std::string read_file(const std::string& path);

/// Writes bytes to a file, creating parent directories.
void write_file(const std::string& path, std::string_view bytes);

}  // namespace ctiforge::text
