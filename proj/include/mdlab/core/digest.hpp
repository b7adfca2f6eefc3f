#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mdlab {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
// Throws FormatError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

// Reads a whole file; throws FormatError on failure.
std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace mdlab
