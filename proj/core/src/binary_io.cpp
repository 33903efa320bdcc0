#include "nsd/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nsd/error.hpp"

namespace nsd::io {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const char>(text.data(), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void append_u32_le(std::vector<char>& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
}

std::uint32_t decode_u32_le(std::span<const char> bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= std::uint32_t(static_cast<unsigned char>(bytes[std::size_t(i)])) << (8 * i);
  }
  return v;
}

void append_f32_le(std::vector<char>& out, std::span<const float> values) {
  out.reserve(out.size() + values.size() * 4);
  for (float f : values) append_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

void decode_f32_le(std::span<const char> bytes, std::span<float> out) {
  if (bytes.size() != out.size() * 4) {
    throw Error(ErrorKind::kFormat, "float32 payload of " + std::to_string(bytes.size()) +
                                        " bytes cannot hold " + std::to_string(out.size()) +
                                        " values");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<float>(decode_u32_le(bytes.subspan(4 * i, 4)));
  }
}

}  // namespace nsd::io
