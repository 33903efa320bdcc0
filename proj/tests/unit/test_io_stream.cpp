#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <optional>
#include <thread>
#include <sstream>

#include "json.hpp"
#include "nsd/error.hpp"
#include "nsd/explain.hpp"
#include "nsd/nsd_raw.hpp"
#include "nsd/stream.hpp"
#include "nsd/synth.hpp"
#include "test_support.hpp"

using namespace nsd;
using nsd::testing::random_tensor;
using nsd::testing::TempDir;
using json = nlohmann::json;

namespace {

dsp::RawRecording small_recording() {
  synth::SyntheticSpec s;
  s.duration_s = 4;
  s.seizures = {{1, 3}};
  s.seed = 2;
  return synth::generate(s);
}

dsp::CleanSignal clean_signal(std::size_t seconds, std::uint64_t seed) {
  dsp::CleanSignal c;
  c.subject_id = "x";
  c.channels = random_tensor<float>({12, seconds * 32}, seed);
  c.valid_segments = {{0, seconds * 32}};
  c.labels.assign(seconds, dsp::ConsensusLabel::kNonSeizure);
  return c;
}

std::optional<ErrorKind> decode_error(std::vector<char> bytes) {
  try {
    raw::decode(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

struct Collected {
  std::vector<json> decisions;
  std::vector<json> log;
  stream::StreamStats stats;
};

Collected run(const model::Model<float>& m, const stream::ChunkSource& source) {
  Collected c;
  c.stats = stream::run_stream(
      m, source, [&](const std::string& s) { c.decisions.push_back(json::parse(s)); },
      [&](const std::string& s) { c.log.push_back(json::parse(s)); });
  return c;
}

}  // namespace

TEST(NsdRaw, RoundTripIsExact) {
  TempDir dir("raw");
  const auto rec = small_recording();
  raw::write_recording(dir / "a.nsdraw", rec);
  const auto back = raw::read_recording(dir / "a.nsdraw");
  EXPECT_EQ(back.subject_id, rec.subject_id);
  EXPECT_EQ(back.fs, rec.fs);
  EXPECT_EQ(back.electrodes, rec.electrodes);
  EXPECT_EQ(back.annotations, rec.annotations);
  std::ofstream(dir / "b.txt") << "x";
  raw::write_recording(dir / "0.nsdraw", rec);
  const auto list = raw::list_recordings(dir.path());
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[0].filename(), "0.nsdraw");
}

TEST(NsdRaw, RejectsMalformedInput) {
  const auto bytes = raw::encode(small_recording());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error(bad_magic), ErrorKind::kFormat);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_EQ(decode_error(truncated), ErrorKind::kFormat);

  auto bad_header = bytes;
  bad_header[12] = '[';
  EXPECT_EQ(decode_error(bad_header), ErrorKind::kFormat);

  auto bad_label = bytes;
  bad_label.back() = 7;
  EXPECT_TRUE(decode_error(bad_label).has_value());

  EXPECT_EQ(decode_error({'N', 'S'}), ErrorKind::kFormat);
  try {
    raw::decode(truncated);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("payload length mismatch"), std::string::npos);
  }
}

TEST(NsdRaw, MissingFileIsIoError) {
  try {
    raw::read_recording("/nonexistent/x.nsdraw");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = small_recording();
  const auto b = small_recording();
  EXPECT_EQ(raw::encode(a), raw::encode(b));
  auto spec = synth::SyntheticSpec{};
  spec.duration_s = 4;
  spec.seed = 3;
  EXPECT_NE(raw::encode(synth::generate(spec)), raw::encode(a));
  EXPECT_EQ(a.annotations.size(), 3u);
  EXPECT_EQ(a.annotations[0], (std::vector<std::uint8_t>{0, 1, 1, 0}));
}

TEST(Synth, InvalidSpecsAreRejected) {
  synth::SyntheticSpec s;
  s.seizures = {{10, 5}};
  EXPECT_THROW(s.validate(), Error);
  s.seizures = {{10, 20}, {15, 25}};
  EXPECT_THROW(s.validate(), Error);
  s.seizures = {{50, 70}};
  EXPECT_THROW(s.validate(), Error);
}

TEST(Synth, CorpusHasOneSeizurePerSubject) {
  const auto specs = synth::corpus({4, 90, 30, 1});
  ASSERT_EQ(specs.size(), 4u);
  for (const auto& s : specs) {
    ASSERT_EQ(s.seizures.size(), 1u);
    EXPECT_DOUBLE_EQ(s.seizures[0].end_s - s.seizures[0].begin_s, 30.0);
    EXPECT_GE(s.seizures[0].begin_s, 1.0);
    EXPECT_LE(s.seizures[0].end_s, 89.0);
  }
}

TEST(RingBuffer, KeepsNewestSamplesInOrder) {
  stream::RingBuffer ring(2, 5);
  Tensor<float> block(Shape{2, 3});
  for (float base : {0.f, 3.f}) {
    for (std::size_t i = 0; i < 3; ++i) {
      block.at(0, i) = base + float(i);
      block.at(1, i) = -(base + float(i));
    }
    ring.push(block);
  }
  ASSERT_TRUE(ring.full());
  const auto s = ring.snapshot();
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(s.at(0, i), float(i + 1));
    EXPECT_EQ(s.at(1, i), -float(i + 1));
  }
  ring.reset();
  EXPECT_FALSE(ring.full());
  EXPECT_THROW(ring.push(Tensor<float>(Shape{3, 1})), Error);
}

TEST(BoundedQueue, DeliversInOrderAcrossThreads) {
  stream::BoundedQueue<int> q(2);
  std::jthread producer([&] {
    for (int i = 0; i < 100; ++i) q.push(i);
    q.close();
  });
  int expect = 0;
  while (auto v = q.pop()) EXPECT_EQ(*v, expect++);
  EXPECT_EQ(expect, 100);
}

TEST(Stream, SixtySecondReplayMatchesBatch) {
  const model::Model<float> m(model::ModelConfig{});
  const auto clean = clean_signal(60, 3);
  const auto out = run(m, stream::replay_source(clean));
  ASSERT_EQ(out.decisions.size(), 49u);
  EXPECT_EQ(out.stats.chunks, 60u);
  std::vector<Tensor<float>> windows;
  for (std::size_t t = 0; t < 49; ++t) windows.push_back(explain::window_at(clean, t));
  const auto p = model::predict(m, windows);
  for (std::size_t t = 0; t < 49; ++t) {
    EXPECT_EQ(out.decisions[t]["t"].get<std::size_t>(), t);
    EXPECT_EQ(out.decisions[t]["probability"].get<float>(), p[t]) << t;
    EXPECT_EQ(out.decisions[t]["seizure"].get<bool>(), p[t] > 0.5f);
  }
  const auto points = explain::explain_stream(m, clean, {false, 64});
  for (std::size_t t = 0; t < 49; ++t) EXPECT_EQ(points[t].probability, p[t]);
}

TEST(Stream, ShortRecordingYieldsNoDecisions) {
  const model::Model<float> m(model::ModelConfig{});
  const auto out = run(m, stream::replay_source(clean_signal(11, 4)));
  EXPECT_TRUE(out.decisions.empty());
  EXPECT_EQ(out.stats.chunks, 11u);
}

TEST(Stream, GapResetsBuffer) {
  const model::Model<float> m(model::ModelConfig{});
  const auto clean = clean_signal(30, 5);
  auto inner = stream::replay_source(clean);
  // Drop seconds 14 and 15.
  stream::ChunkSource gappy = [&]() -> std::optional<stream::Chunk> {
    auto c = inner();
    while (c && (c->t == 14 || c->t == 15)) c = inner();
    return c;
  };
  const auto out = run(m, gappy);
  ASSERT_EQ(out.log.size(), 1u);
  EXPECT_EQ(out.log[0]["event"], "discontinuity");
  EXPECT_EQ(out.log[0]["expected_t"].get<double>(), 14.0);
  EXPECT_EQ(out.log[0]["t"].get<double>(), 16.0);
  // Windows 0..2 before the gap, then 16..18 once 12 s have refilled.
  std::vector<std::size_t> starts;
  for (const auto& d : out.decisions) starts.push_back(d["t"].get<std::size_t>());
  EXPECT_EQ(starts, (std::vector<std::size_t>{0, 1, 2, 16, 17, 18}));
}

TEST(Stream, JsonLinesSource) {
  const model::Model<float> m(model::ModelConfig{});
  const auto clean = clean_signal(13, 6);
  std::ostringstream text;
  for (std::size_t s = 0; s < 13; ++s) {
    json rows = json::array();
    for (std::size_t r = 0; r < 12; ++r) {
      json row = json::array();
      for (std::size_t i = 0; i < 32; ++i) row.push_back(clean.channels.at(r, s * 32 + i));
      rows.push_back(row);
    }
    text << json{{"t", s}, {"samples", rows}}.dump() << "\n\n";
  }
  std::istringstream in(text.str());
  const auto out = run(m, stream::json_lines_source(in));
  ASSERT_EQ(out.decisions.size(), 2u);
  const std::vector<Tensor<float>> w = {explain::window_at(clean, 0), explain::window_at(clean, 1)};
  const auto p = model::predict(m, w);
  EXPECT_EQ(out.decisions[0]["probability"].get<float>(), p[0]);
  EXPECT_EQ(out.decisions[1]["probability"].get<float>(), p[1]);

  std::istringstream bad("{\"t\": 0, \"samples\": [[1,2]]}\n");
  try {
    run(m, stream::json_lines_source(bad));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
  std::istringstream garbage("not json\n");
  try {
    run(m, stream::json_lines_source(garbage));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}
