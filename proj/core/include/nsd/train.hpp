#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nsd/autodiff.hpp"
#include "nsd/dataset.hpp"
#include "nsd/model.hpp"

namespace nsd::train {

struct FocalLossConfig {
  double gamma = 2.0;
  double alpha = 0.4;
  void validate() const;
};

inline constexpr double kProbabilityClip = 1e-7;

/// Mean binary focal cross-entropy over the batch, alpha weighting the
/// positive class. `p` holds probabilities, `labels` 0/1 values of equal length.
template <class T>
ad::Var<T> focal_bce(const ad::Var<T>& p, std::span<const int> labels,
                     const FocalLossConfig& config = {});

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2 = 1e-4;  // penalty l2 * sum(w^2) on regularized parameters
};

struct OptimizerState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam step over every parameter with a gradient.
/// Regularized parameters receive 2 * l2 * w on top of their gradient.
template <class T>
void adam_step(ad::ParameterStore<T>& params, OptimizerState& state, const AdamConfig& config);

/// l2 * sum(w^2) over the regularized parameters.
template <class T>
double l2_penalty(const ad::ParameterStore<T>& params, double l2);

struct TrainConfig {
  model::ModelConfig model;
  AdamConfig adam;
  FocalLossConfig focal;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;  // epochs without validation improvement
  std::uint64_t seed = 0;

  std::string to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;  // focal loss, batch mean averaged over the epoch
  double l2 = 0;          // penalty at the end of the epoch
  double train_accuracy = 0;
  double val_loss = 0;
  double val_auc = 0;
  bool val_auc_defined = false;
  double seconds = 0;
};

struct TrainResult {
  model::Model<float> model;  // best validation AUC, ties to lower loss (or last epoch)
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  double seconds = 0;
};

/// Trains on `train` and selects/early-stops on `validation` (may be empty).
/// Progress is written to `log` as one JSON object per line. `keep_going`,
/// when set, sees every epoch record and may stop the run by returning false.
TrainResult train_loop(std::span<const data::Epoch> train, std::span<const data::Epoch> validation,
                       const TrainConfig& config, std::ostream* log = nullptr,
                       const std::function<bool(const EpochRecord&)>& keep_going = {});

/// Splits training subjects into (fit, validation): about `fraction` of the
/// subjects, at least one when two or more are available.
std::pair<std::vector<std::string>, std::vector<std::string>> carve_validation(
    std::vector<std::string> subjects, double fraction, std::uint64_t seed);

/// Append-only record of one training invocation.
struct RunManifest {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string config_json;
  std::string split_json;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double wall_clock_s = 0;
  std::string checkpoint_path;
  std::map<std::string, std::string> input_digests;

  std::string to_json() const;
};

std::string epoch_record_json(const EpochRecord& r);

}  // namespace nsd::train
