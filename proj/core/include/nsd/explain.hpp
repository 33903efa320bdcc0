#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nsd/dsp.hpp"
#include "nsd/model.hpp"

namespace nsd::explain {

struct Heatmap {
  Tensor<float> values;  // [12, 384], in [0, 1]
  float logit = 0;
  float probability = 0;
  std::string colormap = "bwr";
  std::size_t epoch_start_s = 0;

  bool seizure() const { return probability > 0.5f; }
};

/// Grad-CAM from the last graph-attention layer. `epoch` is one [12, 384]
/// normalized epoch. Relevance M = ReLU(G * w) with w the node-averaged
/// gradient of the logit, min-max scaled, interpolated along time and scaled again.
Heatmap gradcam(const model::Model<float>& model, const Tensor<float>& epoch);

/// The 12 x 16 map before time interpolation (min-max scaled).
Tensor<float> relevance_map(const Tensor<float>& activations, const Tensor<float>& gradients);

/// Linear interpolation of each row onto `samples` points, feature f centred
/// on the middle of the f-th block of samples / F samples.
Tensor<float> interpolate_rows(const Tensor<float>& map, std::size_t samples);

/// In-place min-max scaling to [0, 1]; an all-equal map becomes zeros.
void min_max_normalize(Tensor<float>& values);

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Blue-white-red: 0 -> blue, 0.5 -> white, 1 -> red.
Rgb bwr(double value);

void write_heatmap_csv(const Tensor<float>& values, const std::filesystem::path& path);
Tensor<float> read_heatmap_csv(const std::filesystem::path& path);

/// Stacked traces of `epoch` with per-sample colour from the heatmap; epochs
/// not classified as seizure are drawn all blue.
std::string heatmap_svg(const Heatmap& heatmap, const Tensor<float>& epoch);

/// Writes <stem>.csv and <stem>.svg.
void render_heatmap(const Heatmap& heatmap, const Tensor<float>& epoch,
                    const std::filesystem::path& stem);

struct StreamPoint {
  std::size_t t = 0;  // window start, seconds
  float probability = 0;
  std::optional<Heatmap> heatmap;  // only when probability > 0.5
};

struct ExplainOptions {
  bool heatmaps = true;
  std::size_t batch_size = 64;
};

/// Normalized 12 s window starting at second `start_s` of a clean signal.
Tensor<float> window_at(const dsp::CleanSignal& clean, std::size_t start_s);

/// Number of 12 s windows at 1 s stride: floor(T_s) - 11.
std::size_t window_count(const dsp::CleanSignal& clean);

/// Sliding-window probabilities with Grad-CAM on seizure-positive windows.
std::vector<StreamPoint> explain_stream(const model::Model<float>& model,
                                        const dsp::CleanSignal& clean,
                                        const ExplainOptions& options = {});

}  // namespace nsd::explain
