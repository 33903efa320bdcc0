#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nsd/autodiff.hpp"
#include "nsd/graph_attention.hpp"
#include "nsd/montage_graph.hpp"

namespace nsd::model {

/// Architecture hyperparameters. Block 1 uses two parallel convolutions
/// (kernel_a and kernel_b); blocks 2..4 are residual pairs.
struct ModelConfig {
  std::size_t channels = 12;
  std::size_t samples = 384;
  std::vector<std::size_t> cnn_filters = {32, 64, 8, 1};
  std::size_t kernel_a = 5;
  std::size_t kernel_b = 7;
  std::vector<std::size_t> gat_widths = {37, 32, 16};
  std::vector<std::size_t> mlp_widths = {32, 16, 1};
  double dropout = 0.2;
  double leaky_slope = 0.2;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.9;
  std::uint64_t seed = 0;

  /// Canonical JSON (sorted keys); hash() is its SHA-256 prefix.
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  std::string hash() const;
  void validate() const;

  /// Temporal length entering the GAT stack (samples / 2^blocks).
  std::size_t encoder_length() const;
  std::size_t gat_input_width() const;
};

using ShapeLedger = std::vector<std::pair<std::string, Shape>>;

struct ForwardOptions {
  ad::Mode mode = ad::Mode::kEval;
  ad::Rng* rng = nullptr;   // dropout masks, train mode only
  bool update_stats = true; // train mode: blend batch stats into running stats
  bool frozen = false;      // parameters enter the graph as constants
};

template <class T>
struct ForwardTrace {
  ShapeLedger shapes;
  std::vector<ad::Var<T>> gat_outputs;
};

template <class T>
struct Output {
  ad::Var<T> logit;        // [B]
  ad::Var<T> probability;  // [B]
  ad::Var<T> last_gat;     // [B, 12, F_last]
};

template <class T>
class Model {
 public:
  using StatsMap = std::map<std::string, ad::BatchNormState<T>>;

  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const graph::MontageGraph& graph() const { return graph_; }
  ad::ParameterStore<T>& params() { return params_; }
  const ad::ParameterStore<T>& params() const { return params_; }
  StatsMap& batch_stats() { return stats_; }
  const StatsMap& batch_stats() const { return stats_; }

  /// Full forward pass over input [B, 12, 384]. Updates running statistics
  /// in train mode when options.update_stats is set.
  Output<T> forward(const ad::Var<T>& input, const ForwardOptions& options,
                    ForwardTrace<T>* trace = nullptr);

  /// Eval-mode forward with frozen parameters; touches no shared state.
  Output<T> infer(const Tensor<T>& input, ForwardTrace<T>* trace = nullptr) const;

  // Stages, composed by forward(). `updates` receives running-stat updates.
  ad::Var<T> encode(const ad::Var<T>& input, const ForwardOptions& options,
                    ForwardTrace<T>* trace, StatsMap* updates) const;
  ad::Var<T> attend(const ad::Var<T>& encoded, const ForwardOptions& options,
                    ForwardTrace<T>* trace) const;
  Output<T> head(const ad::Var<T>& last_gat, const ForwardOptions& options,
                 ForwardTrace<T>* trace) const;

  template <class U>
  Model<U> cast() const {
    Model<U> out(config_);
    for (const auto& [name, e] : params_.entries()) {
      out.params().get(name).mutable_value() = e.var.value().template cast<U>();
    }
    for (const auto& [name, s] : stats_) {
      auto& d = out.batch_stats().at(name);
      d.running_mean = s.running_mean.template cast<U>();
      d.running_var = s.running_var.template cast<U>();
    }
    return out;
  }

  std::size_t parameter_count() const { return params_.scalar_count(); }

 private:
  ad::Var<T> param(const std::string& name, const ForwardOptions& options) const;
  ad::Var<T> residual_block(const ad::Var<T>& x, std::size_t index, std::size_t in_filters,
                            std::size_t out_filters, const ForwardOptions& options,
                            StatsMap* updates) const;
  ad::Var<T> bn(const ad::Var<T>& x, const std::string& prefix, const ForwardOptions& options,
                StatsMap* updates) const;

  ModelConfig config_;
  graph::MontageGraph graph_;
  ad::ParameterStore<T> params_;
  StatsMap stats_;
};

extern template class Model<float>;
extern template class Model<double>;

/// Arbitrary JSON objects stored alongside the weights.
struct CheckpointMeta {
  std::string training_json = "{}";
  std::string metrics_json = "{}";
};

/// Directory with manifest.json and payload.f32 (named little-endian float32
/// tensors in manifest order: parameters, then batch-norm running stats).
void save_checkpoint(const Model<float>& model, const std::filesystem::path& dir,
                     const CheckpointMeta& meta = {});
Model<float> load_checkpoint(const std::filesystem::path& dir, CheckpointMeta* meta = nullptr);

/// Probabilities for a stack of epochs [N, 12, 384], evaluated in batches.
std::vector<float> predict(const Model<float>& model, std::span<const Tensor<float>> epochs,
                           std::size_t batch_size = 64);

/// Stacks [12, 384] epochs into one [N, 12, 384] tensor.
template <class T>
Tensor<T> stack_epochs(std::span<const Tensor<float>> epochs);

}  // namespace nsd::model
