#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsd/tensor.hpp"

namespace nsd::dsp {

using Signal = std::vector<double>;
using MultiSignal = std::vector<Signal>;  // [channel][sample]

inline constexpr std::array<std::string_view, 9> kRequiredElectrodes = {
    "Fp1", "Fp2", "T3", "T4", "C3", "C4", "CZ", "O1", "O2"};

struct BipolarChannel {
  std::string_view name;
  std::string_view anode;
  std::string_view cathode;
};

inline constexpr std::size_t kChannelCount = 12;

/// Reduced double-banana montage. Order is fixed; every consumer indexes rows
/// by position in this table.
inline constexpr std::array<BipolarChannel, kChannelCount> kMontage = {{
    {"Fp1-T3", "Fp1", "T3"},
    {"T3-O1", "T3", "O1"},
    {"Fp1-C3", "Fp1", "C3"},
    {"C3-O1", "C3", "O1"},
    {"Fp2-C4", "Fp2", "C4"},
    {"C4-O2", "C4", "O2"},
    {"Fp2-T4", "Fp2", "T4"},
    {"T4-O2", "T4", "O2"},
    {"T3-C3", "T3", "C3"},
    {"C3-CZ", "C3", "CZ"},
    {"CZ-C4", "CZ", "C4"},
    {"C4-T4", "C4", "T4"},
}};

inline constexpr double kRawRateHz = 256.0;
inline constexpr double kModelRateHz = 32.0;
inline constexpr std::size_t kDecimation = 8;

/// Referential recording as stored on disk (µV).
struct RawRecording {
  std::string subject_id;
  double fs = kRawRateHz;
  std::map<std::string, std::vector<float>> electrodes;
  std::vector<std::vector<std::uint8_t>> annotations;  // [annotator][second]

  std::size_t sample_count() const;
  /// Equal electrode lengths, required electrodes, annotation lengths.
  void validate() const;
};

enum class ConsensusLabel : std::uint8_t { kNonSeizure = 0, kSeizure = 1, kDisagreement = 2 };

/// Half-open sample range.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
  bool operator==(const Segment&) const = default;
};

struct CleanSignal {
  std::string subject_id;
  double fs = kModelRateHz;
  Tensor<float> channels;  // [12, T]
  std::vector<Segment> valid_segments;
  std::vector<ConsensusLabel> labels;  // per second

  std::size_t sample_count() const { return channels.empty() ? 0 : channels.dim(1); }
};

/// Transposed direct-form II biquad, a0 normalized to 1.
struct SecondOrderSection {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

struct FilterDesign {
  std::vector<SecondOrderSection> sections;
  double fs = kRawRateHz;
  double pass_low_hz = 1.0;
  double pass_high_hz = 16.0;
  double stop_low_hz = 0.5;
  double stop_high_hz = 20.0;
  double stop_attenuation_db = 40.0;
  int order = 8;
};

struct BandpassOptions {
  int order = 8;  // bandpass order; the lowpass prototype has order/2
  double stop_low_hz = 0.5;
  double stop_high_hz = 20.0;
  double stop_attenuation_db = 40.0;
};

MultiSignal derive_montage(const RawRecording& raw);

/// Maximal valid ranges after dropping runs of exact zeros on all channels
/// that last longer than `min_flat_seconds`.
std::vector<Segment> remove_flat_lines(const MultiSignal& signal, double fs,
                                       double min_flat_seconds = 1.0);

FilterDesign design_cheby2_bandpass(double fs, double low_hz, double high_hz,
                                    const BandpassOptions& options = {});

std::complex<double> frequency_response(const FilterDesign& design, double freq_hz);

/// Single forward pass through the cascade with optional initial state
/// (two values per section).
Signal sosfilt(std::span<const double> x, const FilterDesign& design,
               std::span<const double> initial_state = {});

/// Zero-phase forward-backward filtering with odd-reflection padding of
/// 3 x order samples and steady-state initial conditions.
Signal filter_forward_backward(std::span<const double> x, const FilterDesign& design);

std::size_t filtfilt_padding(const FilterDesign& design);

/// Keeps every `factor`-th sample starting at index 0.
Signal downsample(std::span<const double> x, std::size_t factor = kDecimation);

std::vector<ConsensusLabel> consensus_labels(
    const std::vector<std::vector<std::uint8_t>>& annotations);

struct PreprocessOptions {
  double flat_line_seconds = 1.0;
  BandpassOptions bandpass{};
  double pass_low_hz = 1.0;
  double pass_high_hz = 16.0;
};

/// montage -> flat-line removal -> per-segment zero-phase bandpass -> decimation.
CleanSignal preprocess(const RawRecording& raw, const PreprocessOptions& options = {});

}  // namespace nsd::dsp
