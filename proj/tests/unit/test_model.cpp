#include <gtest/gtest.h>

#include <fstream>

#include "json.hpp"
#include "nsd/error.hpp"
#include "nsd/model.hpp"
#include "test_support.hpp"

using namespace nsd;
using nsd::testing::random_tensor;
using nsd::testing::TempDir;

namespace {

std::size_t conv(std::size_t out, std::size_t in, std::size_t k) { return out * in * k + out; }

std::size_t count_prefix(const model::Model<float>& m, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& [name, e] : m.params().entries())
    if (name.rfind(prefix, 0) == 0) n += e.var.value().size();
  return n;
}

}  // namespace

TEST(Model, ShapeLedgerMatchesArchitecture) {
  const model::Model<float> m(model::ModelConfig{});
  model::ForwardTrace<float> trace;
  const std::size_t B = 2;
  const auto out = m.infer(random_tensor<float>({B, 12, 384}, 1), &trace);
  const model::ShapeLedger expect = {
      {"input", {B, 12, 384}},     {"block1", {B * 12, 32, 192}}, {"block2", {B * 12, 64, 96}},
      {"block3", {B * 12, 8, 48}}, {"block4", {B * 12, 1, 24}},   {"encoder", {B, 12, 24}},
      {"gat1", {B, 12, 37}},       {"gat2", {B, 12, 32}},         {"gat3", {B, 12, 16}},
      {"pool", {B, 12}},           {"dense1", {B, 32}},           {"dense2", {B, 16}},
      {"dense3", {B, 1}}};
  EXPECT_EQ(trace.shapes, expect);
  EXPECT_EQ(out.probability.shape(), (Shape{B}));
  EXPECT_EQ(out.last_gat.shape(), (Shape{B, 12, 16}));
}

TEST(Model, ParameterCountsPerStage) {
  const model::Model<float> m(model::ModelConfig{});
  const std::size_t block1 = conv(32, 1, 5) + conv(32, 1, 7) + 2 * 32;
  const std::size_t block2 = conv(64, 32, 5) + conv(64, 64, 7) + conv(64, 32, 1) + 2 * 64;
  const std::size_t block3 = conv(8, 64, 5) + conv(8, 8, 7) + conv(8, 64, 1) + 2 * 8;
  const std::size_t block4 = conv(1, 8, 5) + conv(1, 1, 7) + conv(1, 8, 1) + 2 * 1;
  const std::size_t gat = (24 * 37 + 2 * 37) + (37 * 32 + 2 * 32) + (32 * 16 + 2 * 16);
  const std::size_t head = (12 * 32 + 32) + (32 * 16 + 16) + (16 * 1 + 1);
  EXPECT_EQ(count_prefix(m, "block1."), block1);
  EXPECT_EQ(count_prefix(m, "block2."), block2);
  EXPECT_EQ(count_prefix(m, "block3."), block3);
  EXPECT_EQ(count_prefix(m, "block4."), block4);
  EXPECT_EQ(count_prefix(m, "gat"), gat);
  EXPECT_EQ(count_prefix(m, "head."), head);
  EXPECT_EQ(m.parameter_count(), block1 + block2 + block3 + block4 + gat + head);
  EXPECT_EQ(m.parameter_count(), 49127u);
}

TEST(Model, WrongInputShapeIsDimensionError) {
  const model::Model<float> m(model::ModelConfig{});
  try {
    m.infer(Tensor<float>(Shape{1, 11, 384}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(Model, ConfigValidationAndHash) {
  model::ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  const auto round = model::ModelConfig::from_json(c.to_json());
  EXPECT_EQ(round.hash(), c.hash());
  auto other = c;
  other.dropout = 0.3;
  EXPECT_NE(other.hash(), c.hash());
  auto bad = c;
  bad.kernel_a = 4;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.samples = 100;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Model, SameSeedSameWeightsAndOutputs) {
  model::ModelConfig c;
  c.seed = 9;
  const model::Model<float> a(c), b(c);
  const auto x = random_tensor<float>({3, 12, 384}, 2);
  EXPECT_EQ(a.infer(x).probability.value(), b.infer(x).probability.value());
  c.seed = 10;
  const model::Model<float> d(c);
  EXPECT_NE(a.params().get("gat1.weight").value(), d.params().get("gat1.weight").value());
}

TEST(Model, TrainModeUpdatesRunningStats) {
  model::Model<float> m(model::ModelConfig{});
  const auto before = m.batch_stats().at("block1.bn").running_mean;
  ad::Rng rng(1);
  model::ForwardOptions opt{ad::Mode::kTrain, &rng, true, false};
  m.forward(ad::Var<float>::constant(random_tensor<float>({2, 12, 384}, 4)), opt);
  EXPECT_NE(m.batch_stats().at("block1.bn").running_mean, before);
}

TEST(Checkpoint, RoundTripIsExact) {
  TempDir dir("ckpt");
  model::Model<float> m(model::ModelConfig{});
  ad::Rng rng(2);
  m.forward(ad::Var<float>::constant(random_tensor<float>({2, 12, 384}, 5)),
            {ad::Mode::kTrain, &rng, true, false});
  model::CheckpointMeta meta{R"({"best_epoch":3})", R"({"auc":0.5})"};
  model::save_checkpoint(m, dir.path(), meta);
  model::CheckpointMeta back_meta;
  const auto back = model::load_checkpoint(dir.path(), &back_meta);
  for (const auto& [name, e] : m.params().entries())
    EXPECT_EQ(back.params().get(name).value(), e.var.value()) << name;
  for (const auto& [name, s] : m.batch_stats()) {
    EXPECT_EQ(back.batch_stats().at(name).running_mean, s.running_mean);
    EXPECT_EQ(back.batch_stats().at(name).running_var, s.running_var);
  }
  EXPECT_EQ(nlohmann::json::parse(back_meta.training_json)["best_epoch"], 3);
  const auto x = random_tensor<float>({2, 12, 384}, 6);
  EXPECT_EQ(back.infer(x).probability.value(), m.infer(x).probability.value());
}

TEST(Checkpoint, RefusesHashMismatchAndCorruption) {
  TempDir dir("ckpt-bad");
  const model::Model<float> m(model::ModelConfig{});
  model::save_checkpoint(m, dir.path());

  auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  const auto original = manifest;
  manifest["config_hash"] = "0000000000000000";
  std::ofstream(dir / "manifest.json") << manifest.dump();
  try {
    model::load_checkpoint(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }

  std::ofstream(dir / "manifest.json") << original.dump();
  std::filesystem::resize_file(dir / "payload.f32", 1000);
  try {
    model::load_checkpoint(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }

  std::ofstream(dir / "manifest.json") << "{not json";
  EXPECT_THROW(model::load_checkpoint(dir.path()), Error);
}

TEST(Predict, BatchingDoesNotChangeProbabilities) {
  const model::Model<float> m(model::ModelConfig{});
  std::vector<Tensor<float>> epochs;
  for (int i = 0; i < 5; ++i) epochs.push_back(random_tensor<float>({12, 384}, 20 + i));
  const auto a = model::predict(m, epochs, 64);
  const auto b = model::predict(m, epochs, 2);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a[i], m.infer(epochs[i].reshaped({1, 12, 384})).probability.value()[0]);
  }
}
