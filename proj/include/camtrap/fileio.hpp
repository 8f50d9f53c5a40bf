#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace camtrap {

/// Reads a whole file as bytes. Throws Error when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes `<path>.tmp`, flushes it to disk and renames it over `path`, so readers
/// observe either the previous content or the new content, never a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Shortest round-trip decimal representation (std::to_chars).
std::string format_real(double value);

}  // namespace camtrap
