#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nsd::io {

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Little-endian float32 encoding, independent of host byte order.
void append_f32_le(std::vector<char>& out, std::span<const float> values);
void decode_f32_le(std::span<const char> bytes, std::span<float> out);

void append_u32_le(std::vector<char>& out, std::uint32_t value);
std::uint32_t decode_u32_le(std::span<const char> bytes);

}  // namespace nsd::io
