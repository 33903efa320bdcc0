#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "nsd/dsp.hpp"
#include "nsd/error.hpp"

using namespace nsd;
using namespace nsd::dsp;

namespace {

constexpr double kPi = std::numbers::pi;

Signal tone(double hz, double seconds, double fs = kRawRateHz, double amplitude = 1.0) {
  Signal x(static_cast<std::size_t>(seconds * fs));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = amplitude * std::sin(2 * kPi * hz * double(i) / fs);
  return x;
}

// Single-bin DFT amplitude of `x[begin, begin + n)` at `hz`.
double dft_amplitude(const Signal& x, std::size_t begin, std::size_t n, double hz, double fs) {
  std::complex<double> acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += x[begin + i] * std::polar(1.0, -2 * kPi * hz * double(begin + i) / fs);
  }
  return 2.0 * std::abs(acc) / double(n);
}

RawRecording recording(std::size_t seconds, double fs = kRawRateHz) {
  RawRecording r;
  r.subject_id = "s";
  r.fs = fs;
  const auto n = static_cast<std::size_t>(double(seconds) * fs);
  float base = 1.0f;
  for (auto name : kRequiredElectrodes) {
    std::vector<float> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = base * float(std::sin(0.05 * double(i) * base));
    r.electrodes.emplace(std::string(name), std::move(x));
    base += 0.5f;
  }
  r.annotations.assign(3, std::vector<std::uint8_t>(seconds, 0));
  return r;
}

}  // namespace

TEST(Montage, ChannelsAreElectrodeDifferences) {
  const auto raw = recording(2);
  const auto m = derive_montage(raw);
  ASSERT_EQ(m.size(), kChannelCount);
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    const auto& a = raw.electrodes.at(std::string(kMontage[c].anode));
    const auto& b = raw.electrodes.at(std::string(kMontage[c].cathode));
    for (std::size_t i = 0; i < a.size(); i += 37) EXPECT_DOUBLE_EQ(m[c][i], double(a[i]) - double(b[i]));
  }
}

TEST(Montage, MissingElectrodeIsDataError) {
  auto raw = recording(2);
  raw.electrodes.erase("CZ");
  try {
    derive_montage(raw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
    EXPECT_NE(std::string(e.what()).find("CZ"), std::string::npos);
  }
}

TEST(FlatLine, LongZeroRunsSplitSegments) {
  const double fs = 256;
  MultiSignal x(kChannelCount, Signal(10 * 256, 1.0));
  for (auto& ch : x) std::fill(ch.begin() + 2 * 256, ch.begin() + 5 * 256, 0.0);      // 3 s flat
  for (auto& ch : x) std::fill(ch.begin() + 7 * 256, ch.begin() + 7 * 256 + 128, 0.0);  // 0.5 s flat
  const auto segs = remove_flat_lines(x, fs);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0], (Segment{0, 2 * 256}));
  EXPECT_EQ(segs[1], (Segment{5 * 256, 10 * 256}));
}

TEST(FlatLine, ZerosOnOneChannelOnlyAreKept) {
  MultiSignal x(kChannelCount, Signal(10 * 256, 1.0));
  std::fill(x[3].begin(), x[3].end(), 0.0);
  const auto segs = remove_flat_lines(x, 256);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0], (Segment{0, 10 * 256}));
}

TEST(Filter, SectionsAreStable) {
  const auto d = design_cheby2_bandpass(256, 1, 16);
  EXPECT_EQ(d.sections.size(), 4u);
  for (const auto& s : d.sections) {
    // Roots of z^2 + a1 z + a2.
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4 * s.a2));
    for (auto root : {(-s.a1 + disc) / 2.0, (-s.a1 - disc) / 2.0}) EXPECT_LT(std::abs(root), 1.0);
  }
}

TEST(Filter, StopbandsReachAttenuation) {
  const auto d = design_cheby2_bandpass(256, 1, 16);
  for (double f : {0.0, 0.25, 0.49, 20.2, 30.0, 60.0, 127.0}) {
    const double db = 20 * std::log10(std::abs(frequency_response(d, f)) + 1e-300);
    EXPECT_LE(db, -40.0 + 1e-6) << f << " Hz";
  }
  EXPECT_NEAR(std::abs(frequency_response(d, 8.0)), 1.0, 0.12);
}

TEST(Filter, InfeasibleDesignIsRejected) {
  EXPECT_THROW(design_cheby2_bandpass(256, 16, 1), Error);
  EXPECT_THROW(design_cheby2_bandpass(32, 1, 16), Error);
}

TEST(Filter, ZeroPhaseTonesViaDft) {
  const auto d = design_cheby2_bandpass(256, 1, 16);
  const double fs = 256;
  const auto pass = filter_forward_backward(tone(8, 20), d);
  const double a8 = dft_amplitude(pass, 5 * 256, 10 * 256, 8, fs);
  EXPECT_NEAR(a8, 1.0, 0.12);
  // Zero phase: the filtered tone stays aligned with the input.
  const auto in = tone(8, 20);
  double lag0 = 0, lag1 = 0;
  for (std::size_t i = 2560; i < 3584; ++i) {
    lag0 += pass[i] * in[i];
    lag1 += pass[i + 1] * in[i];
  }
  EXPECT_GT(lag0, lag1);

  const auto slow = filter_forward_backward(tone(0.1, 200), d);
  EXPECT_LT(dft_amplitude(slow, 50 * 256, 100 * 256, 0.1, fs), 0.02);
}

TEST(Filter, ShortSegmentsAreRejected) {
  const auto d = design_cheby2_bandpass(256, 1, 16);
  EXPECT_EQ(filtfilt_padding(d), 24u);
  EXPECT_THROW(filter_forward_backward(Signal(24, 1.0), d), Error);
  EXPECT_NO_THROW(filter_forward_backward(Signal(25, 1.0), d));
}

TEST(Filter, SosfiltImpulseMatchesDirectRecursion) {
  const auto d = design_cheby2_bandpass(256, 1, 16);
  Signal impulse(64, 0.0);
  impulse[0] = 1.0;
  const auto y = sosfilt(impulse, d);
  // Cascade evaluated with plain difference equations, section by section.
  Signal cur = impulse;
  for (const auto& s : d.sections) {
    Signal next(cur.size(), 0.0);
    for (std::size_t n = 0; n < cur.size(); ++n) {
      double v = s.b0 * cur[n];
      if (n >= 1) v += s.b1 * cur[n - 1] - s.a1 * next[n - 1];
      if (n >= 2) v += s.b2 * cur[n - 2] - s.a2 * next[n - 2];
      next[n] = v;
    }
    cur = next;
  }
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], cur[i], 1e-12);
}

TEST(Downsample, KeepsEveryEighthSample) {
  Signal x(20);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = double(i);
  const auto y = downsample(x);
  ASSERT_EQ(y.size(), 3u);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 8.0);
  EXPECT_EQ(y[2], 16.0);
}

TEST(Consensus, RequiresUnanimity) {
  const std::vector<std::vector<std::uint8_t>> a = {{1, 1, 0, 0}, {1, 0, 0, 1}, {1, 1, 0, 0}};
  const auto c = consensus_labels(a);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c[0], ConsensusLabel::kSeizure);
  EXPECT_EQ(c[1], ConsensusLabel::kDisagreement);
  EXPECT_EQ(c[2], ConsensusLabel::kNonSeizure);
  EXPECT_EQ(c[3], ConsensusLabel::kDisagreement);
  EXPECT_THROW(consensus_labels({{1, 0}, {1}}), Error);
}

TEST(Preprocess, ProducesTwelveChannelsAt32Hz) {
  const auto clean = preprocess(recording(30));
  EXPECT_EQ(clean.channels.shape(), (Shape{12, 30 * 32}));
  EXPECT_DOUBLE_EQ(clean.fs, 32.0);
  ASSERT_EQ(clean.valid_segments.size(), 1u);
  EXPECT_EQ(clean.valid_segments[0], (Segment{0, 960}));
  EXPECT_EQ(clean.labels.size(), 30u);
}

TEST(Preprocess, RejectsNonIntegerRateRatio) {
  EXPECT_THROW(preprocess(recording(30, 250.0)), Error);
}

TEST(Preprocess, FlatStretchMapsToDecimatedSegments) {
  auto raw = recording(30);
  for (auto& [_, x] : raw.electrodes) std::fill(x.begin() + 10 * 256, x.begin() + 14 * 256, 0.0f);
  const auto clean = preprocess(raw);
  ASSERT_EQ(clean.valid_segments.size(), 2u);
  EXPECT_EQ(clean.valid_segments[0], (Segment{0, 320}));
  EXPECT_EQ(clean.valid_segments[1], (Segment{448, 960}));
  for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(clean.channels.at(c, 400), 0.0f);
}
