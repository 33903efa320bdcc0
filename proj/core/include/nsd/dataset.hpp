#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nsd/dsp.hpp"
#include "nsd/tensor.hpp"

namespace nsd::data {

inline constexpr std::size_t kEpochSeconds = 12;
inline constexpr std::size_t kEpochSamples = 384;  // 12 s at 32 Hz

struct Epoch {
  Tensor<float> data;  // [12, 384]
  int label = 0;       // 1 seizure, 0 non-seizure
  std::string subject_id;
  std::size_t start_s = 0;
};

struct ExtractOptions {
  std::size_t seizure_stride_s = 1;      // 11 s overlap
  std::size_t non_seizure_stride_s = 2;  // 10 s overlap
  bool normalize = true;
};

/// Windows of 12 whole seconds inside each valid segment whose seconds all
/// share one consensus class. Output ordered by start time.
std::vector<Epoch> extract_epochs(const dsp::CleanSignal& clean, const ExtractOptions& options = {});

/// Per-row z-score (row std + 1e-8 in the denominator); constant rows become zeros.
void normalize_epoch(Tensor<float>& data);

enum class SplitMode { kHoldout, kKFold };

const char* to_string(SplitMode mode);
SplitMode parse_split_mode(const std::string& text);

/// Subject-level assignment. Holdout uses group 0 = train, 1 = test; k-fold
/// stores the test fold index of each subject.
struct SplitPlan {
  SplitMode mode = SplitMode::kHoldout;
  std::uint64_t seed = 0;
  std::size_t folds = 1;
  std::map<std::string, int> assignment;

  /// Number of train/test rounds: 1 for holdout, k for k-fold.
  std::size_t rounds() const { return mode == SplitMode::kHoldout ? 1 : folds; }
  std::vector<std::string> test_subjects(std::size_t round) const;
  std::vector<std::string> train_subjects(std::size_t round) const;
  std::vector<std::size_t> fold_sizes() const;

  std::string to_json() const;
  static SplitPlan from_json(const std::string& text);
};

SplitPlan make_split(std::vector<std::string> subjects, SplitMode mode, std::uint64_t seed,
                     std::size_t folds = 10);

struct ClassBalance {
  std::size_t seizure = 0;
  std::size_t non_seizure = 0;
  /// seizure / non_seizure; 0 when there are no seizure epochs.
  double ratio = 0.0;
};

ClassBalance class_balance_report(std::span<const Epoch> epochs);

/// Directory with manifest.json and payload.f32 (little-endian float32,
/// epochs in manifest order).
struct EpochStore {
  std::vector<Epoch> epochs;
  std::uint64_t seed = 0;
  std::string splits_json = "{}";  // {"holdout": plan, "kfold": plan}

  std::vector<std::string> subjects() const;
};

void save_epoch_store(const std::filesystem::path& dir, const EpochStore& store);
EpochStore load_epoch_store(const std::filesystem::path& dir);

/// Sorts by (subject, start time).
void sort_epochs(std::vector<Epoch>& epochs);

/// Indices of epochs whose subject is in `subjects`.
std::vector<std::size_t> select_subjects(std::span<const Epoch> epochs,
                                         const std::vector<std::string>& subjects);

}  // namespace nsd::data
