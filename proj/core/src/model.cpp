#include "nsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "nsd/binary_io.hpp"
#include "nsd/digest.hpp"
#include "nsd/error.hpp"

namespace nsd::model {

using json = nlohmann::json;

// ---- config ------------------------------------------------------------------

std::string ModelConfig::to_json() const {
  json j;
  j["channels"] = channels;
  j["samples"] = samples;
  j["cnn_filters"] = cnn_filters;
  j["kernel_a"] = kernel_a;
  j["kernel_b"] = kernel_b;
  j["gat_widths"] = gat_widths;
  j["mlp_widths"] = mlp_widths;
  j["dropout"] = dropout;
  j["leaky_slope"] = leaky_slope;
  j["bn_epsilon"] = bn_epsilon;
  j["bn_momentum"] = bn_momentum;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.channels = j.at("channels").get<std::size_t>();
    c.samples = j.at("samples").get<std::size_t>();
    c.cnn_filters = j.at("cnn_filters").get<std::vector<std::size_t>>();
    c.kernel_a = j.at("kernel_a").get<std::size_t>();
    c.kernel_b = j.at("kernel_b").get<std::size_t>();
    c.gat_widths = j.at("gat_widths").get<std::vector<std::size_t>>();
    c.mlp_widths = j.at("mlp_widths").get<std::vector<std::size_t>>();
    c.dropout = j.at("dropout").get<double>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.bn_epsilon = j.at("bn_epsilon").get<double>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("invalid model config: ") + e.what());
  }
}

std::string ModelConfig::hash() const { return sha256_hex(to_json()).substr(0, 16); }

std::size_t ModelConfig::encoder_length() const {
  return samples >> cnn_filters.size();
}

std::size_t ModelConfig::gat_input_width() const {
  return cnn_filters.back() * encoder_length();
}

void ModelConfig::validate() const {
  if (channels != 12) throw Error(ErrorKind::kConfig, "the montage graph has 12 channels");
  if (cnn_filters.size() < 2) throw Error(ErrorKind::kConfig, "need at least two CNN blocks");
  if (samples == 0 || samples % (std::size_t{1} << cnn_filters.size()) != 0) {
    throw Error(ErrorKind::kConfig, "samples must be divisible by 2^blocks");
  }
  if (kernel_a % 2 == 0 || kernel_b % 2 == 0) {
    throw Error(ErrorKind::kConfig, "kernel sizes must be odd");
  }
  if (gat_widths.empty() || mlp_widths.empty() || mlp_widths.back() != 1) {
    throw Error(ErrorKind::kConfig, "need >= 1 GAT layer and an MLP ending in 1 unit");
  }
  for (std::size_t f : cnn_filters)
    if (f == 0) throw Error(ErrorKind::kConfig, "filter counts must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw Error(ErrorKind::kConfig, "dropout must be in [0,1)");
}

// ---- construction ------------------------------------------------------------

namespace {

template <class T>
Tensor<T> uniform(Shape shape, double bound, ad::Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

std::string block_name(std::size_t index) { return "block" + std::to_string(index); }

}  // namespace

template <class T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)), graph_(graph::build_graph()) {
  config_.validate();
  ad::Rng rng(config_.seed);
  auto add_conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t k) {
    const double bound = std::sqrt(6.0 / double(in * k));  // Kaiming-uniform
    params_.add(name + ".weight", uniform<T>({out, in, k}, bound, rng), true);
    params_.add(name + ".bias", Tensor<T>(Shape{out}), false);
  };
  auto add_bn = [&](const std::string& name, std::size_t c) {
    params_.add(name + ".gamma", Tensor<T>(Shape{c}, T(1)), false);
    params_.add(name + ".beta", Tensor<T>(Shape{c}), false);
    ad::BatchNormState<T> s;
    s.running_mean = Tensor<T>(Shape{c});
    s.running_var = Tensor<T>(Shape{c}, T(1));
    s.momentum = T(config_.bn_momentum);
    s.epsilon = T(config_.bn_epsilon);
    stats_.emplace(name, std::move(s));
  };

  const auto& filters = config_.cnn_filters;
  add_conv("block1.conv_a", filters[0], 1, config_.kernel_a);
  add_conv("block1.conv_b", filters[0], 1, config_.kernel_b);
  add_bn("block1.bn", filters[0]);
  for (std::size_t b = 1; b < filters.size(); ++b) {
    const std::string name = block_name(b + 1);
    add_conv(name + ".conv_a", filters[b], filters[b - 1], config_.kernel_a);
    add_conv(name + ".conv_b", filters[b], filters[b], config_.kernel_b);
    if (filters[b] != filters[b - 1]) add_conv(name + ".skip", filters[b], filters[b - 1], 1);
    add_bn(name + ".bn", filters[b]);
  }

  std::size_t width = config_.gat_input_width();
  for (std::size_t l = 0; l < config_.gat_widths.size(); ++l) {
    const std::size_t out = config_.gat_widths[l];
    const std::string name = "gat" + std::to_string(l + 1);
    params_.add(name + ".weight",
                uniform<T>({width, out}, std::sqrt(6.0 / double(width + out)), rng), true);
    params_.add(name + ".attn",
                uniform<T>({2 * out}, std::sqrt(6.0 / double(2 * out + 1)), rng), false);
    width = out;
  }

  width = config_.channels;
  for (std::size_t l = 0; l < config_.mlp_widths.size(); ++l) {
    const std::size_t out = config_.mlp_widths[l];
    const std::string name = "head.dense" + std::to_string(l + 1);
    params_.add(name + ".weight", uniform<T>({width, out}, std::sqrt(6.0 / double(width)), rng),
                true);
    params_.add(name + ".bias", Tensor<T>(Shape{out}), false);
    width = out;
  }
}

// ---- forward -----------------------------------------------------------------

template <class T>
ad::Var<T> Model<T>::param(const std::string& name, const ForwardOptions& options) const {
  const ad::Var<T>& v = params_.get(name);
  return options.frozen ? ad::Var<T>::constant(v.value()) : v;
}

template <class T>
ad::Var<T> Model<T>::bn(const ad::Var<T>& x, const std::string& prefix,
                        const ForwardOptions& options, StatsMap* updates) const {
  ad::BatchNormState<T>* update = nullptr;
  if (updates && options.mode == ad::Mode::kTrain && options.update_stats) {
    update = &updates->at(prefix);
  }
  return ad::batch_norm(x, param(prefix + ".gamma", options), param(prefix + ".beta", options),
                        stats_.at(prefix), options.mode, update);
}

template <class T>
ad::Var<T> Model<T>::residual_block(const ad::Var<T>& x, std::size_t index,
                                    std::size_t in_filters, std::size_t out_filters,
                                    const ForwardOptions& options, StatsMap* updates) const {
  const std::string name = block_name(index);
  auto h = ad::relu(ad::conv1d(x, param(name + ".conv_a.weight", options),
                               param(name + ".conv_a.bias", options)));
  h = ad::conv1d(h, param(name + ".conv_b.weight", options), param(name + ".conv_b.bias", options));
  ad::Var<T> skip = x;
  if (in_filters != out_filters) {
    skip = ad::conv1d(x, param(name + ".skip.weight", options), param(name + ".skip.bias", options));
  }
  h = ad::relu(ad::add(h, skip));
  h = bn(ad::avg_pool1d(h), name + ".bn", options, updates);
  // The last block feeds the graph directly and carries no dropout.
  if (index < config_.cnn_filters.size()) {
    h = ad::dropout(h, config_.dropout, options.mode, options.rng);
  }
  return h;
}

template <class T>
ad::Var<T> Model<T>::encode(const ad::Var<T>& input, const ForwardOptions& options,
                            ForwardTrace<T>* trace, StatsMap* updates) const {
  const Shape& s = input.shape();
  if (s.size() != 3 || s[1] != config_.channels || s[2] != config_.samples) {
    throw_dimension("Model::encode", "input must be [B, " + std::to_string(config_.channels) +
                                         ", " + std::to_string(config_.samples) + "], got " +
                                         shape_string(s));
  }
  const std::size_t batch = s[0];
  auto record = [&](const std::string& name, const ad::Var<T>& v) {
    if (trace) trace->shapes.emplace_back(name, v.shape());
  };
  record("input", input);

  // EEG channels ride the batch axis and share convolution weights.
  auto x = ad::reshape(input, {batch * config_.channels, 1, config_.samples});
  auto path_a = ad::relu(ad::conv1d(x, param("block1.conv_a.weight", options),
                                    param("block1.conv_a.bias", options)));
  auto path_b = ad::relu(ad::conv1d(x, param("block1.conv_b.weight", options),
                                    param("block1.conv_b.bias", options)));
  auto h = bn(ad::avg_pool1d(ad::add(path_a, path_b)), "block1.bn", options, updates);
  h = ad::dropout(h, config_.dropout, options.mode, options.rng);
  record("block1", h);

  const auto& filters = config_.cnn_filters;
  for (std::size_t b = 1; b < filters.size(); ++b) {
    h = residual_block(h, b + 1, filters[b - 1], filters[b], options, updates);
    record(block_name(b + 1), h);
  }
  auto encoded = ad::reshape(h, {batch, config_.channels, config_.gat_input_width()});
  record("encoder", encoded);
  return encoded;
}

template <class T>
ad::Var<T> Model<T>::attend(const ad::Var<T>& encoded, const ForwardOptions& options,
                            ForwardTrace<T>* trace) const {
  std::vector<gat::GatWeights<T>> layers;
  for (std::size_t l = 0; l < config_.gat_widths.size(); ++l) {
    const std::string name = "gat" + std::to_string(l + 1);
    layers.push_back({param(name + ".weight", options), param(name + ".attn", options)});
  }
  std::vector<ad::Var<T>> outputs;
  auto g = gat::gat_stack<T>(encoded, layers, graph_.adjacency, options.mode, config_.dropout,
                             options.rng, &outputs);
  if (trace) {
    for (std::size_t l = 0; l < outputs.size(); ++l) {
      trace->shapes.emplace_back("gat" + std::to_string(l + 1), outputs[l].shape());
    }
    trace->gat_outputs = outputs;
  }
  return g;
}

template <class T>
Output<T> Model<T>::head(const ad::Var<T>& last_gat, const ForwardOptions& options,
                         ForwardTrace<T>* trace) const {
  const std::size_t batch = last_gat.shape()[0];
  auto h = ad::mean_last_axis(last_gat);  // [B, 12]
  if (trace) trace->shapes.emplace_back("pool", h.shape());
  const std::size_t layers = config_.mlp_widths.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string name = "head.dense" + std::to_string(l + 1);
    h = ad::dense(h, param(name + ".weight", options), param(name + ".bias", options));
    if (trace) trace->shapes.emplace_back("dense" + std::to_string(l + 1), h.shape());
    if (l + 1 < layers) {
      h = ad::dropout(ad::relu(h), config_.dropout, options.mode, options.rng);
    }
  }
  Output<T> out;
  out.last_gat = last_gat;
  out.logit = ad::reshape(h, {batch});
  out.probability = ad::sigmoid(out.logit);
  return out;
}

template <class T>
Output<T> Model<T>::forward(const ad::Var<T>& input, const ForwardOptions& options,
                            ForwardTrace<T>* trace) {
  auto encoded = encode(input, options, trace, &stats_);
  return head(attend(encoded, options, trace), options, trace);
}

template <class T>
Output<T> Model<T>::infer(const Tensor<T>& input, ForwardTrace<T>* trace) const {
  ForwardOptions options;
  options.mode = ad::Mode::kEval;
  options.frozen = true;
  auto x = ad::Var<T>::constant(input);
  return head(attend(encode(x, options, trace, nullptr), options, trace), options, trace);
}

template class Model<float>;
template class Model<double>;

// ---- batching ------------------------------------------------------------------

template <class T>
Tensor<T> stack_epochs(std::span<const Tensor<float>> epochs) {
  if (epochs.empty()) throw_dimension("stack_epochs", "no epochs");
  const Shape& s = epochs.front().shape();
  if (s.size() != 2) throw_dimension("stack_epochs", "epochs must be [channels, samples]");
  Tensor<T> out(Shape{epochs.size(), s[0], s[1]});
  const std::size_t per = s[0] * s[1];
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    if (epochs[i].shape() != s) throw_dimension("stack_epochs", "epoch shapes differ");
    std::copy(epochs[i].data().begin(), epochs[i].data().end(), out.data().begin() + i * per);
  }
  return out;
}

template Tensor<float> stack_epochs<float>(std::span<const Tensor<float>>);
template Tensor<double> stack_epochs<double>(std::span<const Tensor<float>>);

std::vector<float> predict(const Model<float>& model, std::span<const Tensor<float>> epochs,
                           std::size_t batch_size) {
  std::vector<float> probs;
  probs.reserve(epochs.size());
  for (std::size_t i = 0; i < epochs.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, epochs.size() - i);
    const auto out = model.infer(stack_epochs<float>(epochs.subspan(i, n)));
    for (float p : out.probability.value().data()) probs.push_back(p);
  }
  return probs;
}

// ---- checkpoint ------------------------------------------------------------------

void save_checkpoint(const Model<float>& model, const std::filesystem::path& dir,
                     const CheckpointMeta& meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create '" + dir.string() + "': " + ec.message());

  json tensors = json::array();
  std::vector<char> payload;
  for (const auto& [name, e] : model.params().entries()) {
    tensors.push_back({{"name", name}, {"shape", e.var.shape()}, {"kind", "param"}});
    io::append_f32_le(payload, e.var.value().data());
  }
  for (const auto& [name, s] : model.batch_stats()) {
    tensors.push_back({{"name", name + ".running_mean"},
                       {"shape", s.running_mean.shape()},
                       {"kind", "buffer"}});
    io::append_f32_le(payload, s.running_mean.data());
    tensors.push_back({{"name", name + ".running_var"},
                       {"shape", s.running_var.shape()},
                       {"kind", "buffer"}});
    io::append_f32_le(payload, s.running_var.data());
  }
  json manifest;
  manifest["format"] = "nsd-checkpoint";
  manifest["version"] = 1;
  manifest["config"] = json::parse(model.config().to_json());
  manifest["config_hash"] = model.config().hash();
  manifest["parameter_count"] = model.parameter_count();
  manifest["tensors"] = std::move(tensors);
  manifest["payload_bytes"] = payload.size();
  manifest["training"] = json::parse(meta.training_json);
  manifest["metrics"] = json::parse(meta.metrics_json);
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  io::write_file(dir / "payload.f32", payload);
}

Model<float> load_checkpoint(const std::filesystem::path& dir, CheckpointMeta* meta) {
  const std::string text = io::read_text(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kFormat, "checkpoint manifest malformed at byte " +
                                        std::to_string(e.byte) + ": " + e.what());
  }
  try {
    if (manifest.at("format") != "nsd-checkpoint") {
      throw Error(ErrorKind::kFormat, "not a checkpoint manifest");
    }
    const ModelConfig config = ModelConfig::from_json(manifest.at("config").dump());
    const std::string stored = manifest.at("config_hash").get<std::string>();
    if (stored != config.hash()) {
      throw Error(ErrorKind::kConfig, "checkpoint config hash mismatch: manifest says " + stored +
                                          ", config hashes to " + config.hash());
    }
    Model<float> model(config);
    const std::vector<char> payload = io::read_file(dir / "payload.f32");

    std::size_t expected = 0;
    for (const auto& t : manifest.at("tensors")) {
      expected += shape_size(t.at("shape").get<Shape>()) * 4;
    }
    if (payload.size() != expected) {
      throw Error(ErrorKind::kFormat, "corrupt checkpoint payload: " +
                                          std::to_string(payload.size()) + " bytes, expected " +
                                          std::to_string(expected));
    }

    std::set<std::string> seen;
    std::size_t offset = 0;
    for (const auto& t : manifest.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const Shape shape = t.at("shape").get<Shape>();
      const std::size_t bytes = shape_size(shape) * 4;
      const std::span<const char> chunk(payload.data() + offset, bytes);
      offset += bytes;
      Tensor<float>* target = nullptr;
      if (model.params().contains(name)) {
        target = &model.params().get(name).mutable_value();
      } else {
        for (const char* suffix : {".running_mean", ".running_var"}) {
          const std::string sfx(suffix);
          if (name.size() > sfx.size() && name.ends_with(sfx)) {
            auto it = model.batch_stats().find(name.substr(0, name.size() - sfx.size()));
            if (it != model.batch_stats().end()) {
              target = sfx == ".running_mean" ? &it->second.running_mean
                                              : &it->second.running_var;
            }
          }
        }
      }
      if (!target) throw Error(ErrorKind::kFormat, "unknown tensor '" + name + "' in checkpoint");
      if (target->shape() != shape) {
        throw Error(ErrorKind::kFormat, "tensor '" + name + "' has shape " + shape_string(shape) +
                                            ", model expects " + shape_string(target->shape()));
      }
      io::decode_f32_le(chunk, target->data());
      seen.insert(name);
    }
    const std::size_t wanted = model.params().size() + 2 * model.batch_stats().size();
    if (seen.size() != wanted) {
      throw Error(ErrorKind::kFormat, "checkpoint is missing tensors (" +
                                          std::to_string(seen.size()) + " of " +
                                          std::to_string(wanted) + ")");
    }
    if (meta) {
      meta->training_json = manifest.value("training", json::object()).dump();
      meta->metrics_json = manifest.value("metrics", json::object()).dump();
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace nsd::model
