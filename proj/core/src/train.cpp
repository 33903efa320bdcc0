#include "nsd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "nsd/error.hpp"
#include "nsd/metrics.hpp"

namespace nsd::train {

using json = nlohmann::json;

void FocalLossConfig::validate() const {
  if (!(gamma >= 0)) throw Error(ErrorKind::kConfig, "focal gamma must be >= 0");
  if (!(alpha > 0 && alpha < 1)) throw Error(ErrorKind::kConfig, "focal alpha must be in (0,1)");
}

namespace {

// Per-sample loss and d loss / d p at an already clipped probability.
std::pair<double, double> focal_terms(double p, int y, double gamma, double alpha) {
  if (y == 1) {
    const double q = 1 - p;
    const double w = std::pow(q, gamma);
    const double dw = gamma == 0 ? 0.0 : -gamma * std::pow(q, gamma - 1);
    const double lp = std::log(p);
    return {-alpha * w * lp, -alpha * (dw * lp + w / p)};
  }
  const double w = std::pow(p, gamma);
  const double dw = gamma == 0 ? 0.0 : gamma * std::pow(p, gamma - 1);
  const double lq = std::log1p(-p);
  return {-(1 - alpha) * w * lq, -(1 - alpha) * (dw * lq - w / (1 - p))};
}

}  // namespace

template <class T>
ad::Var<T> focal_bce(const ad::Var<T>& p, std::span<const int> labels,
                     const FocalLossConfig& config) {
  config.validate();
  if (p.value().size() != labels.size() || labels.empty()) {
    throw_dimension("focal_bce", "got " + std::to_string(p.value().size()) +
                                     " probabilities for " + std::to_string(labels.size()) +
                                     " labels");
  }
  const std::size_t n = labels.size();
  std::vector<double> dloss(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw Error(ErrorKind::kData, "focal_bce: label " + std::to_string(labels[i]) +
                                        " at index " + std::to_string(i) + " is not 0 or 1");
    }
    const double raw = double(p.value()[i]);
    const double pc = std::clamp(raw, kProbabilityClip, 1 - kProbabilityClip);
    auto [loss, grad] = focal_terms(pc, labels[i], config.gamma, config.alpha);
    total += loss;
    // Clipping is flat outside the interval.
    dloss[i] = (raw == pc) ? grad / double(n) : 0.0;
  }
  Tensor<T> out(Shape{1}, T(total / double(n)));
  return ad::make_op<T>("focal_bce", std::move(out), {p},
                        [dloss = std::move(dloss)](ad::Node<T>& self) {
                          T* d = ad::grad_target(*self.parents[0]);
                          if (!d) return;
                          const double g = double(self.grad[0]);
                          for (std::size_t i = 0; i < dloss.size(); ++i) d[i] += T(g * dloss[i]);
                        });
}

template ad::Var<float> focal_bce<float>(const ad::Var<float>&, std::span<const int>,
                                         const FocalLossConfig&);
template ad::Var<double> focal_bce<double>(const ad::Var<double>&, std::span<const int>,
                                           const FocalLossConfig&);

template <class T>
void adam_step(ad::ParameterStore<T>& params, OptimizerState& state, const AdamConfig& config) {
  ++state.step;
  const double t = double(state.step);
  const double c1 = 1 - std::pow(config.beta1, t);
  const double c2 = 1 - std::pow(config.beta2, t);
  for (auto& [name, e] : params.entries()) {
    if (!e.var.requires_grad()) continue;
    Tensor<T>& w = e.var.mutable_value();
    const Tensor<T>& g = e.var.grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    if (m.size() != w.size() || g.size() != w.size()) {
      throw_dimension("adam_step", "moment/gradient size mismatch for '" + name + "'");
    }
    const double decay = e.regularized ? 2 * config.l2 : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = double(g[i]) + decay * double(w[i]);
      m[i] = config.beta1 * m[i] + (1 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1 - config.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] = T(double(w[i]) - config.lr * mhat / (std::sqrt(vhat) + config.epsilon));
    }
  }
}

template void adam_step<float>(ad::ParameterStore<float>&, OptimizerState&, const AdamConfig&);
template void adam_step<double>(ad::ParameterStore<double>&, OptimizerState&, const AdamConfig&);

template <class T>
double l2_penalty(const ad::ParameterStore<T>& params, double l2) {
  double s = 0;
  for (const auto& [_, e] : params.entries()) {
    if (!e.regularized) continue;
    for (T w : e.var.value().data()) s += double(w) * double(w);
  }
  return l2 * s;
}

template double l2_penalty<float>(const ad::ParameterStore<float>&, double);
template double l2_penalty<double>(const ad::ParameterStore<double>&, double);

std::string TrainConfig::to_json() const {
  json j;
  j["model"] = json::parse(model.to_json());
  j["adam"] = {{"lr", adam.lr},
               {"beta1", adam.beta1},
               {"beta2", adam.beta2},
               {"epsilon", adam.epsilon},
               {"l2", adam.l2}};
  j["focal"] = {{"gamma", focal.gamma}, {"alpha", focal.alpha}};
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  return j.dump();
}

std::string epoch_record_json(const EpochRecord& r) {
  json j = {{"epoch", r.epoch},
            {"train_loss", r.train_loss},
            {"l2", r.l2},
            {"train_accuracy", r.train_accuracy},
            {"val_loss", r.val_loss},
            {"seconds", r.seconds}};
  j["val_auc"] = r.val_auc_defined ? json(r.val_auc) : json(nullptr);
  return j.dump();
}

namespace {

std::vector<int> labels_of(std::span<const data::Epoch> epochs,
                           std::span<const std::size_t> index) {
  std::vector<int> out;
  out.reserve(index.size());
  for (std::size_t i : index) out.push_back(epochs[i].label);
  return out;
}

}  // namespace

TrainResult train_loop(std::span<const data::Epoch> train, std::span<const data::Epoch> validation,
                       const TrainConfig& config, std::ostream* log,
                       const std::function<bool(const EpochRecord&)>& keep_going) {
  if (train.empty()) throw Error(ErrorKind::kData, "training split is empty");
  if (config.batch_size == 0) throw Error(ErrorKind::kConfig, "batch size must be positive");
  config.focal.validate();
  const auto started = std::chrono::steady_clock::now();

  model::Model<float> model(config.model);
  model::Model<float> best = model.cast<float>();
  OptimizerState optimizer;
  ad::Rng rng(config.seed);

  std::vector<Tensor<float>> val_data;
  std::vector<int> val_labels;
  for (const auto& e : validation) {
    val_data.push_back(e.data);
    val_labels.push_back(e.label);
  }

  TrainResult result{std::move(best), {}, 0, false, 0};
  double best_score = -std::numeric_limits<double>::infinity();
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor<float>> batch;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0, correct = 0;

    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> index(order.data() + begin, end - begin);
      batch.clear();
      for (std::size_t i : index) batch.push_back(train[i].data);
      const std::vector<int> labels = labels_of(train, index);

      model::ForwardOptions options;
      options.mode = ad::Mode::kTrain;
      options.rng = &rng;
      auto input = ad::Var<float>::constant(model::stack_epochs<float>(batch));
      const auto out = model.forward(input, options);
      auto loss = focal_bce(out.probability, labels, config.focal);
      const double value = double(loss.value()[0]);
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::kNumeric, "non-finite training loss at epoch " +
                                             std::to_string(epoch) + ", batch " +
                                             std::to_string(batches + 1));
      }
      ad::backward(loss);
      adam_step(model.params(), optimizer, config.adam);

      loss_sum += value;
      ++batches;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += (out.probability.value()[i] > metrics::kThreshold) == (labels[i] == 1);
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / double(batches);
    record.train_accuracy = double(correct) / double(train.size());
    record.l2 = l2_penalty(model.params(), config.adam.l2);

    bool improved = false, snapshot = false;
    if (!val_data.empty()) {
      const std::vector<float> probs = model::predict(model, val_data);
      auto pv = ad::Var<float>::constant(Tensor<float>(Shape{probs.size()}, probs));
      record.val_loss = double(focal_bce(pv, val_labels, config.focal).value()[0]);
      try {
        record.val_auc = metrics::roc_auc(std::span<const float>(probs), val_labels);
        record.val_auc_defined = true;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kData) throw;
      }
      // Patience follows the AUC alone; among equal-AUC epochs the snapshot
      // moves to the lower validation loss. AUC saturates early on small
      // validation sets while calibration is still improving.
      const double score = record.val_auc_defined ? record.val_auc : -record.val_loss;
      improved = score > best_score;
      const bool better_tie = score == best_score && record.val_loss < best_val_loss;
      if (improved || better_tie) {
        best_score = score;
        best_val_loss = record.val_loss;
        snapshot = true;
      }
    } else {
      improved = snapshot = true;
    }
    if (snapshot) {
      result.model = model.cast<float>();
      result.best_epoch = epoch;
    }
    since_best = improved ? 0 : since_best + 1;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.history.push_back(record);
    if (log) *log << epoch_record_json(record) << '\n' << std::flush;

    if ((!val_data.empty() && since_best >= config.patience) ||
        (keep_going && !keep_going(record))) {
      result.stopped_early = true;
      break;
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::pair<std::vector<std::string>, std::vector<std::string>> carve_validation(
    std::vector<std::string> subjects, double fraction, std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 2 || fraction <= 0) return {subjects, {}};
  ad::Rng rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::round(fraction * double(subjects.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, subjects.size() - 1);
  std::vector<std::string> val(subjects.end() - std::ptrdiff_t(n_val), subjects.end());
  subjects.resize(subjects.size() - n_val);
  std::sort(subjects.begin(), subjects.end());
  std::sort(val.begin(), val.end());
  return {subjects, val};
}

std::string RunManifest::to_json() const {
  json j;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  j["split"] = split_json.empty() ? json::object() : json::parse(split_json);
  j["history"] = json::array();
  for (const auto& r : history) j["history"].push_back(json::parse(epoch_record_json(r)));
  j["best_epoch"] = best_epoch;
  j["wall_clock_s"] = wall_clock_s;
  j["checkpoint"] = checkpoint_path;
  j["inputs"] = input_digests;
  return j.dump(2);
}

}  // namespace nsd::train
