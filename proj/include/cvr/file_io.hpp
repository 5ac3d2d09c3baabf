#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cvr {

/// Writes to a sibling temporary file and renames it over `path`.
/// Throws IoError naming the path on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Shortest form is not required; 17 significant digits always round-trip.
std::string format_real(double value);

} // namespace cvr
