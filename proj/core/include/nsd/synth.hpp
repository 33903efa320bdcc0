#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nsd/dataset.hpp"
#include "nsd/dsp.hpp"

namespace nsd::synth {

struct Interval {
  double begin_s = 0;
  double end_s = 0;
};

/// One synthetic referential recording: AR(1) background on every electrode
/// plus amplitude-modulated rhythmic bursts during the seizure intervals.
struct SyntheticSpec {
  std::string subject_id = "synth-000";
  double duration_s = 60;
  std::vector<Interval> seizures;
  double fs = dsp::kRawRateHz;
  double seizure_hz = 3.0;         // within 2-4 Hz
  double seizure_uv = 80.0;        // burst peak amplitude
  double modulation_hz = 0.2;      // slow amplitude envelope
  double background_uv = 20.0;     // background standard deviation
  double background_ar = 0.9;      // AR(1) coefficient
  std::size_t annotators = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

dsp::RawRecording generate(const SyntheticSpec& spec);

struct CorpusSpec {
  std::size_t subjects = 10;
  double duration_s = 90;
  double seizure_s = 30;
  std::uint64_t seed = 0;
};

/// Per-subject specs with one seizure each at a seeded position.
std::vector<SyntheticSpec> corpus(const CorpusSpec& spec);

/// Ready-made normalized epochs: seizure epochs carry a 3 Hz burst on `rows`
/// over unit white noise; non-seizure epochs are noise only. Labels alternate.
std::vector<data::Epoch> channel_epochs(std::size_t count, std::uint64_t seed,
                                        const std::vector<std::size_t>& rows,
                                        double burst_amplitude = 2.0,
                                        const std::string& subject = "toy");

}  // namespace nsd::synth
