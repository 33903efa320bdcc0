#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "json.hpp"
#include "nsd/error.hpp"
#include "nsd/metrics.hpp"

using namespace nsd;
using namespace nsd::metrics;

namespace {

// Mann-Whitney statistic over all positive/negative pairs.
double pairs_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / double(pairs);
}

}  // namespace

TEST(RocAuc, WorkedExample) {
  const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 0.75);
}

TEST(RocAuc, MatchesAllPairsOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng() % 20) / 20.0;  // coarse grid forces ties
      y[i] = int(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(roc_auc(s, y), pairs_auc(s, y), 1e-9) << trial;
  }
}

TEST(RocAuc, ComplementAndMonotoneInvariance) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> nd;
  std::vector<double> s(40), neg(40), cubed(40);
  std::vector<int> y(40), flipped(40);
  for (std::size_t i = 0; i < 40; ++i) {
    y[i] = int(i % 3 == 0);
    flipped[i] = 1 - y[i];
    s[i] = nd(rng) + y[i];
    neg[i] = -s[i];
    cubed[i] = s[i] * s[i] * s[i] + 2.0;
  }
  const double a = roc_auc(s, y);
  EXPECT_NEAR(roc_auc(neg, y), 1 - a, 1e-12);
  EXPECT_NEAR(roc_auc(s, flipped), 1 - a, 1e-12);
  EXPECT_DOUBLE_EQ(roc_auc(cubed, y), a);
}

TEST(RocAuc, SingleClassIsDataError) {
  const std::vector<double> s = {0.1, 0.2};
  const std::vector<int> y = {1, 1};
  try {
    roc_auc(s, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
}

TEST(Kappa, HandComputedCase) {
  Confusion c{40, 20, 30, 10};
  EXPECT_EQ(cohen_kappa(c), 0.4);
}

TEST(Kappa, ConstantPredictionsGiveZero) {
  EXPECT_DOUBLE_EQ(cohen_kappa(Confusion{30, 70, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(cohen_kappa(Confusion{0, 0, 70, 30}), 0.0);
  EXPECT_DOUBLE_EQ(cohen_kappa(Confusion{50, 0, 0, 0}), 0.0);
}

TEST(Rates, HandComputedCase) {
  const auto r = precision_recall_accuracy(Confusion{83, 12, 88, 17});
  EXPECT_DOUBLE_EQ(r.recall, 0.83);
  EXPECT_DOUBLE_EQ(r.precision, 83.0 / 95.0);
  EXPECT_NEAR(r.precision, 0.8737, 5e-5);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.855);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Rates, ZeroDenominatorsWarn) {
  const auto r = precision_recall_accuracy(Confusion{0, 0, 10, 0});
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.warnings.size(), 2u);
}

TEST(Confusion, StrictThreshold) {
  const std::vector<float> s = {0.5f, 0.51f, 0.2f, 0.9f};
  const std::vector<int> y = {1, 0, 0, 1};
  const auto c = confusion_at(s, y);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.tn, 1u);
}

TEST(Aggregate, MeanStdAndQuartiles) {
  std::vector<FoldReport> folds(3);
  const double aucs[] = {0.8, 0.9, 1.0};
  for (std::size_t i = 0; i < 3; ++i) {
    folds[i].fold = i;
    folds[i].auc = aucs[i];
  }
  const auto r = aggregate_folds(folds);
  EXPECT_NEAR(r.auc.mean, 0.9, 1e-15);
  EXPECT_NEAR(r.auc.std, 0.1, 1e-15);
  EXPECT_NEAR(r.auc.median, 0.9, 1e-15);
  EXPECT_NEAR(r.auc.q1, 0.85, 1e-15);
  EXPECT_NEAR(r.auc.q3, 0.95, 1e-15);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["folds"].size(), 3u);
  EXPECT_NE(r.to_csv().find("\nmean,"), std::string::npos);
}

TEST(Aggregate, UndefinedAucFoldsAreSkipped) {
  const std::vector<float> s = {0.9f, 0.8f};
  const std::vector<int> y = {1, 1};
  auto undefined = evaluate_fold(s, y, 0);
  EXPECT_FALSE(undefined.auc_defined);
  FoldReport ok;
  ok.auc = 0.7;
  const auto r = aggregate_folds({undefined, ok});
  EXPECT_EQ(r.auc.n, 1u);
  EXPECT_DOUBLE_EQ(r.auc.mean, 0.7);
  EXPECT_EQ(r.accuracy.n, 2u);
}

TEST(EvaluateFold, RatesStayInRange) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<float> s(60);
  std::vector<int> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    s[i] = u(rng);
    y[i] = int(i % 2);
  }
  const auto f = evaluate_fold(s, y);
  for (double v : {f.accuracy, f.auc, f.recall, f.precision}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GE(f.kappa, -1.0);
  EXPECT_LE(f.kappa, 1.0);
}
