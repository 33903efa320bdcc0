#include "nsd/nsd_raw.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "nsd/binary_io.hpp"
#include "nsd/error.hpp"

namespace nsd::raw {

using json = nlohmann::json;

namespace {

constexpr std::size_t kPreamble = sizeof kMagic + 4;

std::size_t seconds_of(std::size_t n_samples, double fs) {
  return static_cast<std::size_t>(std::floor(double(n_samples) / fs));
}

}  // namespace

std::vector<char> encode(const dsp::RawRecording& recording) {
  recording.validate();
  const std::size_t n = recording.sample_count();
  json header;
  header["subject_id"] = recording.subject_id;
  header["fs"] = recording.fs;
  header["electrodes"] = json::array();
  for (const auto& [name, _] : recording.electrodes) header["electrodes"].push_back(name);
  header["n_samples"] = n;
  header["n_annotators"] = recording.annotations.size();
  const std::string text = header.dump();

  std::vector<char> out(kMagic, kMagic + sizeof kMagic);
  io::append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [_, samples] : recording.electrodes) io::append_f32_le(out, samples);
  for (const auto& a : recording.annotations) {
    for (std::uint8_t v : a) out.push_back(static_cast<char>(v));
  }
  return out;
}

dsp::RawRecording decode(std::span<const char> bytes, const std::string& source) {
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorKind::kFormat, source + ": " + what);
  };
  if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw fail("not an NSD-RAW file (bad magic at byte 0)");
  }
  const std::uint32_t header_len = io::decode_u32_le(bytes.subspan(sizeof kMagic, 4));
  if (bytes.size() < kPreamble + header_len) {
    throw fail("header length " + std::to_string(header_len) + " exceeds file size " +
               std::to_string(bytes.size()) + " (at byte 8)");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + header_len);
  } catch (const json::parse_error& e) {
    const std::size_t at = kPreamble + (e.byte > 0 ? e.byte - 1 : 0);
    throw fail("malformed header at byte " + std::to_string(at));
  }

  dsp::RawRecording rec;
  std::vector<std::string> names;
  std::size_t n_samples = 0, n_annotators = 0;
  try {
    rec.subject_id = header.at("subject_id").get<std::string>();
    rec.fs = header.at("fs").get<double>();
    names = header.at("electrodes").get<std::vector<std::string>>();
    n_samples = header.at("n_samples").get<std::size_t>();
    n_annotators = header.at("n_annotators").get<std::size_t>();
  } catch (const json::exception& e) {
    throw fail(std::string("invalid header field (header starts at byte 12): ") + e.what());
  }
  if (!(rec.fs > 0)) throw fail("header fs must be positive");
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw fail("duplicate electrode names in header");
  }

  const std::size_t payload = names.size() * n_samples * 4;
  const std::size_t labels = n_annotators * seconds_of(n_samples, rec.fs);
  const std::size_t expected = kPreamble + header_len + payload + labels;
  if (bytes.size() != expected) {
    throw fail("payload length mismatch: file has " + std::to_string(bytes.size()) +
               " bytes, header implies " + std::to_string(expected));
  }

  std::size_t offset = kPreamble + header_len;
  for (const auto& name : names) {
    std::vector<float> samples(n_samples);
    io::decode_f32_le(bytes.subspan(offset, n_samples * 4), samples);
    offset += n_samples * 4;
    rec.electrodes.emplace(name, std::move(samples));
  }
  const std::size_t seconds = seconds_of(n_samples, rec.fs);
  for (std::size_t a = 0; a < n_annotators; ++a) {
    std::vector<std::uint8_t> row(seconds);
    for (std::size_t s = 0; s < seconds; ++s) {
      const auto v = static_cast<std::uint8_t>(bytes[offset + s]);
      if (v > 1) {
        throw fail("annotation value " + std::to_string(v) + " at byte " +
                   std::to_string(offset + s) + " is not 0 or 1");
      }
      row[s] = v;
    }
    offset += seconds;
    rec.annotations.push_back(std::move(row));
  }
  return rec;
}

void write_recording(const std::filesystem::path& path, const dsp::RawRecording& recording) {
  io::write_file(path, encode(recording));
}

dsp::RawRecording read_recording(const std::filesystem::path& path) {
  return decode(io::read_file(path), path.string());
}

std::vector<std::filesystem::path> list_recordings(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(ErrorKind::kIo, "'" + dir.string() + "' is not a directory");
  }
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == kExtension) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace nsd::raw
