#include "nsd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "nsd/error.hpp"

namespace nsd::synth {

void SyntheticSpec::validate() const {
  if (!(duration_s > 0) || !(fs > 0)) {
    throw Error(ErrorKind::kConfig, "synthetic duration and fs must be positive");
  }
  std::vector<Interval> sorted = seizures;
  std::sort(sorted.begin(), sorted.end(),
            [](const Interval& a, const Interval& b) { return a.begin_s < b.begin_s; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (s.begin_s < 0 || s.end_s > duration_s || s.end_s <= s.begin_s) {
      throw Error(ErrorKind::kConfig, "seizure interval [" + std::to_string(s.begin_s) + ", " +
                                          std::to_string(s.end_s) + ") outside the recording");
    }
    if (i && s.begin_s < sorted[i - 1].end_s) {
      throw Error(ErrorKind::kConfig, "seizure intervals overlap");
    }
  }
}

dsp::RawRecording generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.fs));
  const double innovation = spec.background_uv * std::sqrt(1 - spec.background_ar * spec.background_ar);
  const double two_pi = 2 * std::numbers::pi;

  dsp::RawRecording rec;
  rec.subject_id = spec.subject_id;
  rec.fs = spec.fs;
  for (std::string_view name : dsp::kRequiredElectrodes) {
    // Each electrode sees the rhythm with its own gain and phase, so the
    // bipolar differences keep it.
    const double gain = 0.4 + 1.2 * unit(rng);
    const double phase = two_pi * unit(rng);
    std::vector<float> x(n);
    double state = spec.background_uv * normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      state = spec.background_ar * state + innovation * normal(rng);
      double v = state;
      const double t = double(i) / spec.fs;
      for (const auto& s : spec.seizures) {
        if (t < s.begin_s || t >= s.end_s) continue;
        const double ramp = std::min({1.0, (t - s.begin_s) / 1.0, (s.end_s - t) / 1.0});
        const double envelope = 0.75 + 0.25 * std::sin(two_pi * spec.modulation_hz * t);
        v += gain * spec.seizure_uv * ramp * envelope * std::sin(two_pi * spec.seizure_hz * t + phase);
      }
      x[i] = static_cast<float>(v);
    }
    rec.electrodes.emplace(std::string(name), std::move(x));
  }

  const auto seconds = static_cast<std::size_t>(std::floor(double(n) / spec.fs));
  std::vector<std::uint8_t> labels(seconds, 0);
  for (std::size_t s = 0; s < seconds; ++s) {
    for (const auto& iv : spec.seizures) {
      if (double(s) >= iv.begin_s && double(s) + 1 <= iv.end_s) labels[s] = 1;
    }
  }
  rec.annotations.assign(spec.annotators, labels);
  return rec;
}

std::vector<SyntheticSpec> corpus(const CorpusSpec& spec) {
  if (spec.seizure_s + 2 > spec.duration_s) {
    throw Error(ErrorKind::kConfig, "seizure longer than the recording");
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<SyntheticSpec> out;
  for (std::size_t i = 0; i < spec.subjects; ++i) {
    SyntheticSpec s;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%03zu", i);
    s.subject_id = id;
    s.duration_s = spec.duration_s;
    const auto slack = static_cast<long long>(spec.duration_s - spec.seizure_s);
    const auto begin = std::uniform_int_distribution<long long>(1, slack - 1)(rng);
    s.seizures = {{double(begin), double(begin) + spec.seizure_s}};
    s.seed = rng();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<data::Epoch> channel_epochs(std::size_t count, std::uint64_t seed,
                                        const std::vector<std::size_t>& rows,
                                        double burst_amplitude, const std::string& subject) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2 * std::numbers::pi;
  const double fs = dsp::kModelRateHz;
  std::vector<data::Epoch> out;
  for (std::size_t e = 0; e < count; ++e) {
    data::Epoch epoch;
    epoch.label = int(e % 2);
    epoch.subject_id = subject;
    epoch.start_s = e;
    epoch.data = Tensor<float>(Shape{dsp::kChannelCount, data::kEpochSamples});
    for (std::size_t r = 0; r < dsp::kChannelCount; ++r)
      for (std::size_t t = 0; t < data::kEpochSamples; ++t) epoch.data.at(r, t) = float(normal(rng));
    if (epoch.label == 1) {
      const double hz = 2.5 + unit(rng);
      for (std::size_t r : rows) {
        const double phase = two_pi * unit(rng);
        for (std::size_t t = 0; t < data::kEpochSamples; ++t) {
          epoch.data.at(r, t) +=
              float(burst_amplitude * std::sin(two_pi * hz * double(t) / fs + phase));
        }
      }
    }
    data::normalize_epoch(epoch.data);
    out.push_back(std::move(epoch));
  }
  return out;
}

}  // namespace nsd::synth
