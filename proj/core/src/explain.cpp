#include "nsd/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nsd/binary_io.hpp"
#include "nsd/dataset.hpp"
#include "nsd/error.hpp"

namespace nsd::explain {

void min_max_normalize(Tensor<float>& values) {
  auto v = values.data();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const float low = *lo, range = *hi - *lo;
  if (!(range > 0)) {
    std::fill(v.begin(), v.end(), 0.0f);
    return;
  }
  for (float& x : v) x = std::clamp((x - low) / range, 0.0f, 1.0f);
}

Tensor<float> relevance_map(const Tensor<float>& activations, const Tensor<float>& gradients) {
  if (activations.rank() != 2 || activations.shape() != gradients.shape()) {
    throw_dimension("relevance_map", "activations " + shape_string(activations.shape()) +
                                         " and gradients " + shape_string(gradients.shape()));
  }
  const std::size_t nodes = activations.dim(0), features = activations.dim(1);
  std::vector<double> w(features, 0.0);
  for (std::size_t c = 0; c < nodes; ++c)
    for (std::size_t f = 0; f < features; ++f) w[f] += gradients.at(c, f);
  for (double& x : w) x /= double(nodes);

  Tensor<float> m(activations.shape());
  for (std::size_t c = 0; c < nodes; ++c)
    for (std::size_t f = 0; f < features; ++f)
      m.at(c, f) = float(std::max(0.0, double(activations.at(c, f)) * w[f]));
  min_max_normalize(m);
  return m;
}

Tensor<float> interpolate_rows(const Tensor<float>& map, std::size_t samples) {
  const std::size_t rows = map.dim(0), cols = map.dim(1);
  Tensor<float> out(Shape{rows, samples});
  const double block = double(samples) / double(cols);
  for (std::size_t t = 0; t < samples; ++t) {
    const double pos = std::clamp((double(t) + 0.5) / block - 0.5, 0.0, double(cols - 1));
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, cols - 1);
    const double frac = pos - double(lo);
    for (std::size_t r = 0; r < rows; ++r) {
      out.at(r, t) = float((1 - frac) * map.at(r, lo) + frac * map.at(r, hi));
    }
  }
  return out;
}

Heatmap gradcam(const model::Model<float>& model, const Tensor<float>& epoch) {
  const auto& cfg = model.config();
  if (epoch.shape() != Shape{cfg.channels, cfg.samples}) {
    throw_dimension("gradcam", "epoch must be [" + std::to_string(cfg.channels) + ", " +
                                   std::to_string(cfg.samples) + "], got " +
                                   shape_string(epoch.shape()));
  }
  model::ForwardOptions options;
  options.mode = ad::Mode::kEval;
  options.frozen = true;
  auto x = ad::Var<float>::constant(epoch.reshaped({1, cfg.channels, cfg.samples}));
  const auto activations = model.attend(model.encode(x, options, nullptr, nullptr), options, nullptr);

  // The captured activations become the only differentiable input of the head.
  auto g = ad::Var<float>::leaf(activations.value());
  const auto out = model.head(g, options, nullptr);
  ad::backward(ad::sum(out.logit));

  const Shape map_shape{cfg.channels, activations.shape()[2]};
  Heatmap h;
  h.logit = out.logit.value()[0];
  h.probability = out.probability.value()[0];
  h.values = interpolate_rows(relevance_map(activations.value().reshaped(map_shape),
                                            g.grad().reshaped(map_shape)),
                              cfg.samples);
  min_max_normalize(h.values);
  return h;
}

Rgb bwr(double value) {
  const double v = std::clamp(std::isfinite(value) ? value : 0.0, 0.0, 1.0);
  auto channel = [](double x) { return static_cast<unsigned char>(std::lround(255.0 * x)); };
  if (v <= 0.5) {
    const double s = v / 0.5;
    return {channel(s), channel(s), 255};
  }
  const double s = (1.0 - v) / 0.5;
  return {255, channel(s), channel(s)};
}

void write_heatmap_csv(const Tensor<float>& values, const std::filesystem::path& path) {
  std::string text;
  char buf[32];
  for (std::size_t r = 0; r < values.dim(0); ++r) {
    for (std::size_t c = 0; c < values.dim(1); ++c) {
      std::snprintf(buf, sizeof buf, c ? ",%.6f" : "%.6f", double(values.at(r, c)));
      text += buf;
    }
    text += '\n';
  }
  io::write_text(path, text);
}

Tensor<float> read_heatmap_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::vector<float> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t n = 0;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        values.push_back(std::stof(cell));
      } catch (const std::exception&) {
        throw Error(ErrorKind::kFormat, path.string() + ": bad value '" + cell + "' on row " +
                                            std::to_string(rows + 1));
      }
      ++n;
    }
    if (rows && n != cols) throw Error(ErrorKind::kFormat, path.string() + ": ragged rows");
    cols = n;
    ++rows;
  }
  if (!rows) throw Error(ErrorKind::kFormat, path.string() + ": empty heatmap");
  return Tensor<float>(Shape{rows, cols}, std::move(values));
}

std::string heatmap_svg(const Heatmap& heatmap, const Tensor<float>& epoch) {
  const std::size_t rows = epoch.dim(0), samples = epoch.dim(1);
  const double width = 960, row_h = 40, left = 70, top = 20;
  const double dx = (width - left - 10) / double(samples - 1);
  const bool seizure = heatmap.seizure();
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << top * 2 + row_h * double(rows) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#f4f4f4\"/>\n";
  char buf[160];
  for (std::size_t r = 0; r < rows; ++r) {
    const double mid = top + row_h * (double(r) + 0.5);
    float peak = 1e-6f;
    for (std::size_t t = 0; t < samples; ++t) peak = std::max(peak, std::abs(epoch.at(r, t)));
    const double gain = 0.45 * row_h / double(peak);
    const std::string_view name = r < dsp::kChannelCount ? dsp::kMontage[r].name : "";
    svg << "<text x=\"4\" y=\"" << mid + 4 << "\">" << name << "</text>\n";
    for (std::size_t t = 0; t + 1 < samples; ++t) {
      const Rgb c = seizure ? bwr(heatmap.values.at(r, t)) : bwr(0.0);
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#%02x%02x%02x\"/>\n",
                    left + dx * double(t), mid - gain * epoch.at(r, t), left + dx * double(t + 1),
                    mid - gain * epoch.at(r, t + 1), c.r, c.g, c.b);
      svg << buf;
    }
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"14\">p=%.4f</text>\n", left,
                double(heatmap.probability));
  svg << buf << "</svg>\n";
  return svg.str();
}

void render_heatmap(const Heatmap& heatmap, const Tensor<float>& epoch,
                    const std::filesystem::path& stem) {
  write_heatmap_csv(heatmap.values, std::filesystem::path(stem.string() + ".csv"));
  io::write_text(std::filesystem::path(stem.string() + ".svg"), heatmap_svg(heatmap, epoch));
}

std::size_t window_count(const dsp::CleanSignal& clean) {
  const auto seconds = static_cast<std::size_t>(double(clean.sample_count()) / clean.fs);
  return seconds >= data::kEpochSeconds ? seconds - data::kEpochSeconds + 1 : 0;
}

Tensor<float> window_at(const dsp::CleanSignal& clean, std::size_t start_s) {
  const std::size_t per_second = static_cast<std::size_t>(clean.fs);
  const std::size_t begin = start_s * per_second, len = data::kEpochSamples;
  const std::size_t total = clean.sample_count(), rows = clean.channels.dim(0);
  if (begin + len > total) {
    throw Error(ErrorKind::kData, "window at " + std::to_string(start_s) + " s exceeds the signal");
  }
  Tensor<float> w(Shape{rows, len});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < len; ++t) w.at(r, t) = clean.channels.at(r, begin + t);
  data::normalize_epoch(w);
  return w;
}

std::vector<StreamPoint> explain_stream(const model::Model<float>& model,
                                        const dsp::CleanSignal& clean,
                                        const ExplainOptions& options) {
  const std::size_t n = window_count(clean);
  if (n == 0) {
    throw Error(ErrorKind::kData, "signal of " +
                                      std::to_string(double(clean.sample_count()) / clean.fs) +
                                      " s is shorter than one 12 s window");
  }
  std::vector<StreamPoint> points(n);
  std::vector<Tensor<float>> batch;
  for (std::size_t begin = 0; begin < n; begin += options.batch_size) {
    const std::size_t end = std::min(n, begin + options.batch_size);
    batch.clear();
    for (std::size_t s = begin; s < end; ++s) batch.push_back(window_at(clean, s));
    const std::vector<float> probs = model::predict(model, batch, batch.size());
    for (std::size_t s = begin; s < end; ++s) {
      StreamPoint& p = points[s];
      p.t = s;
      p.probability = probs[s - begin];
      if (options.heatmaps && p.probability > 0.5f) {
        p.heatmap = gradcam(model, batch[s - begin]);
        p.heatmap->epoch_start_s = s;
      }
    }
  }
  return points;
}

}  // namespace nsd::explain
