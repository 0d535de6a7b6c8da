#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace labloop {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

/// Writes via a sibling temp file and rename(2), so readers never observe a
/// partially written file.
void write_file_atomic(const fs::path& path, std::string_view content);

/// Appends one record and flushes it under an advisory lock.
void append_line_locked(const fs::path& path, std::string_view line);

}  // namespace labloop
