#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nsd/dsp.hpp"

namespace nsd::raw {

/// Layout, all integers little-endian:
///   bytes 0..7   magic "NSDRAW01"
///   bytes 8..11  u32 header length H
///   next H bytes JSON {"subject_id", "fs", "electrodes", "n_samples", "n_annotators"}
///   payload      float32, electrode-major, electrodes in header order
///   annotations  n_annotators x floor(n_samples / fs) bytes, values 0/1
inline constexpr char kMagic[8] = {'N', 'S', 'D', 'R', 'A', 'W', '0', '1'};
inline constexpr const char* kExtension = ".nsdraw";

std::vector<char> encode(const dsp::RawRecording& recording);
dsp::RawRecording decode(std::span<const char> bytes, const std::string& source = "<memory>");

void write_recording(const std::filesystem::path& path, const dsp::RawRecording& recording);
dsp::RawRecording read_recording(const std::filesystem::path& path);

/// *.nsdraw files in `dir`, sorted by name.
std::vector<std::filesystem::path> list_recordings(const std::filesystem::path& dir);

}  // namespace nsd::raw
