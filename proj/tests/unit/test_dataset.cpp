#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "nsd/dataset.hpp"
#include "nsd/error.hpp"
#include "test_support.hpp"

using namespace nsd;
using namespace nsd::data;
using dsp::ConsensusLabel;

namespace {

dsp::CleanSignal clean_signal(std::vector<ConsensusLabel> labels, std::vector<dsp::Segment> segments = {}) {
  dsp::CleanSignal c;
  c.subject_id = "s1";
  const std::size_t n = labels.size() * 32;
  c.channels = nsd::testing::random_tensor<float>({12, n}, 3);
  c.labels = std::move(labels);
  c.valid_segments = segments.empty() ? std::vector<dsp::Segment>{{0, n}} : std::move(segments);
  return c;
}

// Counts windows by brute force: every start second whose 12 seconds are all
// valid, share one non-disagreement class and lie on the class's stride grid
// measured from the start of the run.
std::size_t enumerate(const dsp::CleanSignal& c) {
  std::size_t count = 0;
  for (const auto& seg : c.valid_segments) {
    const std::size_t first = (seg.begin + 31) / 32, last = seg.end / 32;
    for (std::size_t s = first; s + 12 <= last; ++s) {
      const auto cls = c.labels[s];
      if (cls == ConsensusLabel::kDisagreement) continue;
      bool uniform = true;
      for (std::size_t k = s; k < s + 12; ++k) uniform = uniform && c.labels[k] == cls;
      if (!uniform) continue;
      std::size_t run = s;
      while (run > first && c.labels[run - 1] == cls) --run;
      const std::size_t stride = cls == ConsensusLabel::kSeizure ? 1 : 2;
      if ((s - run) % stride == 0) ++count;
    }
  }
  return count;
}

std::vector<std::string> subjects(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("subj" + std::to_string(i));
  return out;
}

}  // namespace

TEST(Epoching, SixtySecondSeizureGivesFortyNine) {
  const auto e = extract_epochs(clean_signal(std::vector<ConsensusLabel>(60, ConsensusLabel::kSeizure)));
  EXPECT_EQ(e.size(), 49u);
  for (const auto& x : e) EXPECT_EQ(x.label, 1);
}

TEST(Epoching, SixtySecondNonSeizureGivesTwentyFive) {
  const auto e = extract_epochs(clean_signal(std::vector<ConsensusLabel>(60, ConsensusLabel::kNonSeizure)));
  EXPECT_EQ(e.size(), 25u);
  EXPECT_EQ(e.back().start_s, 48u);
}

TEST(Epoching, MatchesEnumerationOracleOnMixedAnnotations) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<ConsensusLabel> labels;
    while (labels.size() < 150) {
      const auto cls = static_cast<ConsensusLabel>(rng() % 3);
      const std::size_t len = 1 + rng() % 40;
      for (std::size_t i = 0; i < len; ++i) labels.push_back(cls);
    }
    labels.resize(150);
    std::vector<dsp::Segment> segs = {{0, 70 * 32 + 5}, {80 * 32 + 3, 150 * 32}};
    const auto c = clean_signal(labels, segs);
    const auto e = extract_epochs(c);
    EXPECT_EQ(e.size(), enumerate(c)) << "trial " << trial;
    for (const auto& x : e) {
      for (std::size_t k = x.start_s; k < x.start_s + 12; ++k) {
        EXPECT_EQ(int(c.labels[k]), x.label);
      }
    }
  }
}

TEST(Epoching, DisagreementSecondsBreakWindows) {
  std::vector<ConsensusLabel> labels(30, ConsensusLabel::kSeizure);
  labels[15] = ConsensusLabel::kDisagreement;
  // Runs of 15 and 14 seconds: 4 + 3 windows.
  EXPECT_EQ(extract_epochs(clean_signal(labels)).size(), 7u);
}

TEST(Epoching, WindowsAreNormalizedPerRow) {
  const auto e = extract_epochs(clean_signal(std::vector<ConsensusLabel>(12, ConsensusLabel::kSeizure)));
  ASSERT_EQ(e.size(), 1u);
  for (std::size_t r = 0; r < 12; ++r) {
    double m = 0, s = 0;
    for (std::size_t t = 0; t < kEpochSamples; ++t) m += e[0].data.at(r, t);
    m /= kEpochSamples;
    for (std::size_t t = 0; t < kEpochSamples; ++t) s += std::pow(e[0].data.at(r, t) - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(std::sqrt(s / kEpochSamples), 1.0, 1e-4);
  }
}

TEST(Epoching, ConstantRowsBecomeZero) {
  Tensor<float> t(Shape{2, 4}, 3.0f);
  t.at(1, 2) = 5.0f;
  normalize_epoch(t);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t.at(0, i), 0.0f);
  EXPECT_GT(t.at(1, 2), 0.0f);
}

TEST(Splits, HoldoutThirtyNineSubjects) {
  const auto plan = make_split(subjects(39), SplitMode::kHoldout, 7);
  const auto train_list = plan.train_subjects(0);
  const auto test_list = plan.test_subjects(0);
  EXPECT_EQ(train_list.size(), 31u);
  EXPECT_EQ(test_list.size(), 8u);
  const std::set<std::string> train(train_list.begin(), train_list.end());
  for (const auto& s : test_list) EXPECT_EQ(train.count(s), 0u);
}

TEST(Splits, TenFoldSizesAndDisjointness) {
  const auto plan = make_split(subjects(39), SplitMode::kKFold, 7, 10);
  auto sizes = plan.fold_sizes();
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 4, 4, 4, 4, 4, 4, 4, 3}));
  std::set<std::string> seen;
  for (std::size_t f = 0; f < plan.rounds(); ++f) {
    for (const auto& s : plan.test_subjects(f)) EXPECT_TRUE(seen.insert(s).second) << s;
    const auto train = plan.train_subjects(f);
    EXPECT_EQ(train.size() + plan.test_subjects(f).size(), 39u);
  }
  EXPECT_EQ(seen.size(), 39u);
}

TEST(Splits, SeedDeterminesAssignmentAndDuplicatesCollapse) {
  auto names = subjects(10);
  names.push_back("subj3");
  const auto a = make_split(names, SplitMode::kHoldout, 3);
  const auto b = make_split(subjects(10), SplitMode::kHoldout, 3);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.test_subjects(0).size(), 2u);
  const auto c = SplitPlan::from_json(a.to_json());
  EXPECT_EQ(c.assignment, a.assignment);
}

TEST(ClassBalance, ReportsRatio) {
  std::vector<Epoch> e(5);
  e[0].label = e[1].label = 1;
  const auto r = class_balance_report(e);
  EXPECT_EQ(r.seizure, 2u);
  EXPECT_EQ(r.non_seizure, 3u);
  EXPECT_DOUBLE_EQ(r.ratio, 2.0 / 3.0);
}

TEST(EpochStore, RoundTripsAndRejectsTruncation) {
  nsd::testing::TempDir dir("store");
  EpochStore store;
  store.seed = 5;
  for (int i = 0; i < 3; ++i) {
    Epoch e;
    e.data = nsd::testing::random_tensor<float>({12, 384}, 10 + i);
    e.label = i % 2;
    e.subject_id = "s" + std::to_string(i % 2);
    e.start_s = 3 * i;
    store.epochs.push_back(e);
  }
  save_epoch_store(dir.path(), store);
  const auto back = load_epoch_store(dir.path());
  ASSERT_EQ(back.epochs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.epochs[i].data, store.epochs[i].data);
    EXPECT_EQ(back.epochs[i].label, store.epochs[i].label);
    EXPECT_EQ(back.epochs[i].subject_id, store.epochs[i].subject_id);
    EXPECT_EQ(back.epochs[i].start_s, store.epochs[i].start_s);
  }
  std::filesystem::resize_file(dir / "payload.f32", 100);
  try {
    load_epoch_store(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}
