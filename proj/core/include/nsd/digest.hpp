#pragma once

#include <filesystem>
#include <span>
#include <string>

namespace nsd {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const char> bytes);
std::string sha256_hex(const std::string& text);
std::string file_digest(const std::filesystem::path& path);

}  // namespace nsd
