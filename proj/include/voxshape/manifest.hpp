// manifest.hpp - content hashing and atomic file output for run manifests.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace voxshape {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace voxshape
