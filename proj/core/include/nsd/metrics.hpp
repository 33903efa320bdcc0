#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nsd::metrics {

inline constexpr double kThreshold = 0.5;

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

/// Score > threshold counts as a positive prediction.
Confusion confusion_at(std::span<const float> scores, std::span<const int> labels,
                       double threshold = kThreshold);

/// Area under the ROC curve; ties contribute one half. Throws kData when
/// only one class is present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
double roc_auc(std::span<const float> scores, std::span<const int> labels);

/// (p_o - p_e) / (1 - p_e) evaluated on integer counts; 0 when p_e == 1.
double cohen_kappa(const Confusion& c);

struct Rates {
  double precision = 0, recall = 0, accuracy = 0;
  std::vector<std::string> warnings;  // 0/0 guards that fired
};

Rates precision_recall_accuracy(const Confusion& c);

struct FoldReport {
  std::size_t fold = 0;
  Confusion confusion;
  double accuracy = 0, auc = 0, recall = 0, precision = 0, kappa = 0;
  bool auc_defined = true;
  std::vector<std::string> warnings;
};

FoldReport evaluate_fold(std::span<const float> scores, std::span<const int> labels,
                         std::size_t fold = 0);

/// Sample statistics; quartiles by linear interpolation between order
/// statistics at position q * (n - 1).
struct Summary {
  double mean = 0, std = 0, median = 0, q1 = 0, q3 = 0;
  std::size_t n = 0;
};

Summary summarize(std::vector<double> values);
double quantile(std::vector<double> values, double q);

struct EvalReport {
  std::vector<FoldReport> folds;
  Summary auc, accuracy, recall, precision, kappa;

  std::string to_json() const;
  /// One row per fold plus "mean", "std", "median", "q1", "q3" rows.
  std::string to_csv() const;
};

/// Folds with undefined AUC are left out of the AUC summary.
EvalReport aggregate_folds(std::vector<FoldReport> folds);

}  // namespace nsd::metrics
