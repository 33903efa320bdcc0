#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "nsd/error.hpp"
#include "nsd/explain.hpp"
#include "nsd/synth.hpp"
#include "test_support.hpp"

using namespace nsd;
using nsd::testing::random_tensor;
using nsd::testing::TempDir;

namespace {

dsp::CleanSignal clean_signal(std::size_t seconds, std::uint64_t seed) {
  dsp::CleanSignal c;
  c.subject_id = "x";
  c.channels = random_tensor<float>({12, seconds * 32}, seed);
  c.valid_segments = {{0, seconds * 32}};
  c.labels.assign(seconds, dsp::ConsensusLabel::kNonSeizure);
  return c;
}

}  // namespace

TEST(GradCam, ValuesAreBoundedAndShaped) {
  const model::Model<float> m(model::ModelConfig{});
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto h = explain::gradcam(m, random_tensor<float>({12, 384}, s));
    ASSERT_EQ(h.values.shape(), (Shape{12, 384}));
    for (float v : h.values.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(GradCam, ZeroHeadGivesZeroMapAndHalfProbability) {
  model::Model<float> m(model::ModelConfig{});
  m.params().get("head.dense3.weight").mutable_value().fill(0.0f);
  m.params().get("head.dense3.bias").mutable_value().fill(0.0f);
  const auto h = explain::gradcam(m, random_tensor<float>({12, 384}, 3));
  EXPECT_EQ(h.probability, 0.5f);
  EXPECT_EQ(h.logit, 0.0f);
  for (float v : h.values.data()) EXPECT_EQ(v, 0.0f);
}

TEST(GradCam, PositiveLogitScalingLeavesMapUnchanged) {
  model::Model<float> m(model::ModelConfig{});
  const auto epoch = random_tensor<float>({12, 384}, 4);
  const auto a = explain::gradcam(m, epoch);
  for (auto* name : {"head.dense3.weight", "head.dense3.bias"}) {
    for (auto& v : m.params().get(name).mutable_value().data()) v *= 4.0f;
  }
  const auto b = explain::gradcam(m, epoch);
  EXPECT_NEAR(b.logit, 4.0f * a.logit, 1e-5f * (1 + std::abs(a.logit)));
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-4f);
}

TEST(GradCam, ProbabilityIsBitIdenticalToInference) {
  const model::Model<float> m(model::ModelConfig{});
  const auto epoch = random_tensor<float>({12, 384}, 5);
  const auto h = explain::gradcam(m, epoch);
  EXPECT_EQ(h.probability, m.infer(epoch.reshaped({1, 12, 384})).probability.value()[0]);
}

TEST(Relevance, OracleOnSmallMap) {
  Tensor<float> g(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<float> d(Shape{2, 3}, {1, -1, 1, 1, -1, 3});
  // w = node mean of gradients = (1, -1, 2); M = ReLU(G * w) = [1,0,6; 4,0,12].
  const auto m = explain::relevance_map(g, d);
  const float expect[] = {1 / 12.f, 0, 6 / 12.f, 4 / 12.f, 0, 1};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(m[i], expect[i], 1e-7f);
}

TEST(Interpolation, FeaturesSitAtBlockCentres) {
  Tensor<float> map(Shape{1, 2}, {0.0f, 1.0f});
  const auto out = explain::interpolate_rows(map, 8);
  // Centres at samples 1.5 and 5.5 (block width 4).
  const float expect[] = {0, 0, 0.125f, 0.375f, 0.625f, 0.875f, 1, 1};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out[i], expect[i], 1e-7f) << i;
}

TEST(Normalize, ConstantMapBecomesZero) {
  Tensor<float> t(Shape{2, 2}, 3.0f);
  explain::min_max_normalize(t);
  for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Colormap, BwrEndpoints) {
  EXPECT_EQ(explain::bwr(0.0), (explain::Rgb{0, 0, 255}));
  EXPECT_EQ(explain::bwr(0.5), (explain::Rgb{255, 255, 255}));
  EXPECT_EQ(explain::bwr(1.0), (explain::Rgb{255, 0, 0}));
  EXPECT_EQ(explain::bwr(-3.0), explain::bwr(0.0));
}

TEST(HeatmapCsv, RoundTrip) {
  TempDir dir("csv");
  Tensor<float> t(Shape{12, 384});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(i % 1000) / 1000.0f;
  explain::write_heatmap_csv(t, dir / "h.csv");
  const auto back = explain::read_heatmap_csv(dir / "h.csv");
  ASSERT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(back[i], t[i], 5e-7f);
  std::ofstream(dir / "bad.csv") << "1,2\n3\n";
  try {
    explain::read_heatmap_csv(dir / "bad.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

TEST(HeatmapSvg, NonSeizureEpochIsAllBlue) {
  explain::Heatmap h;
  h.values = Tensor<float>(Shape{12, 384}, 1.0f);
  h.probability = 0.2f;
  const auto svg = explain::heatmap_svg(h, random_tensor<float>({12, 384}, 1));
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_EQ(svg.find("#ff0000"), std::string::npos);
  EXPECT_NE(svg.find("#0000ff"), std::string::npos);
  h.probability = 0.9f;
  EXPECT_NE(explain::heatmap_svg(h, random_tensor<float>({12, 384}, 1)).find("#ff0000"),
            std::string::npos);
}

TEST(ExplainStream, WindowCountAndBatchAgreement) {
  const model::Model<float> m(model::ModelConfig{});
  const auto clean = clean_signal(20, 7);
  EXPECT_EQ(explain::window_count(clean), 9u);
  EXPECT_EQ(explain::window_count(clean_signal(11, 1)), 0u);
  const auto points = explain::explain_stream(m, clean, {true, 4});
  ASSERT_EQ(points.size(), 9u);
  std::vector<Tensor<float>> windows;
  for (std::size_t t = 0; t < 9; ++t) windows.push_back(explain::window_at(clean, t));
  const auto p = model::predict(m, windows);
  for (std::size_t t = 0; t < 9; ++t) {
    EXPECT_EQ(points[t].t, t);
    EXPECT_EQ(points[t].probability, p[t]);
    EXPECT_EQ(points[t].heatmap.has_value(), p[t] > 0.5f);
    if (points[t].heatmap) EXPECT_EQ(points[t].heatmap->probability, p[t]);
  }
  const auto off = explain::explain_stream(m, clean, {false, 64});
  for (std::size_t t = 0; t < 9; ++t) {
    EXPECT_EQ(off[t].probability, points[t].probability);
    EXPECT_FALSE(off[t].heatmap.has_value());
  }
}
