#pragma once

#include <string>

namespace kse {

/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

}  // namespace kse
