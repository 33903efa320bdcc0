#include "nsd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "json.hpp"
#include "nsd/binary_io.hpp"
#include "nsd/error.hpp"

namespace nsd::data {

using json = nlohmann::json;

std::vector<Epoch> extract_epochs(const dsp::CleanSignal& clean, const ExtractOptions& options) {
  if (std::abs(clean.fs - dsp::kModelRateHz) > 1e-9) {
    throw Error(ErrorKind::kData, "epoch extraction expects 32 Hz signals");
  }
  if (options.seizure_stride_s == 0 || options.non_seizure_stride_s == 0) {
    throw Error(ErrorKind::kConfig, "epoch strides must be positive");
  }
  const std::size_t per_s = static_cast<std::size_t>(dsp::kModelRateHz);
  const std::size_t total = clean.sample_count();
  std::vector<Epoch> out;

  for (const dsp::Segment& seg : clean.valid_segments) {
    const std::size_t first = (seg.begin + per_s - 1) / per_s;
    const std::size_t last = std::min({seg.end, total}) / per_s;
    const std::size_t end_s = std::min(last, clean.labels.size());
    // Walk maximal runs of one consensus class; windows never leave a run.
    std::size_t run_start = first;
    while (run_start < end_s) {
      const dsp::ConsensusLabel cls = clean.labels[run_start];
      std::size_t run_end = run_start;
      while (run_end < end_s && clean.labels[run_end] == cls) ++run_end;
      if (cls != dsp::ConsensusLabel::kDisagreement) {
        const bool seizure = cls == dsp::ConsensusLabel::kSeizure;
        const std::size_t stride =
            seizure ? options.seizure_stride_s : options.non_seizure_stride_s;
        for (std::size_t s = run_start; s + kEpochSeconds <= run_end; s += stride) {
          Epoch e;
          e.data = Tensor<float>(Shape{dsp::kChannelCount, kEpochSamples});
          for (std::size_t c = 0; c < dsp::kChannelCount; ++c) {
            for (std::size_t t = 0; t < kEpochSamples; ++t) {
              e.data.at(c, t) = clean.channels.at(c, s * per_s + t);
            }
          }
          if (options.normalize) normalize_epoch(e.data);
          e.label = seizure ? 1 : 0;
          e.subject_id = clean.subject_id;
          e.start_s = s;
          out.push_back(std::move(e));
        }
      }
      run_start = run_end;
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Epoch& a, const Epoch& b) { return a.start_s < b.start_s; });
  return out;
}

void normalize_epoch(Tensor<float>& data) {
  if (data.rank() != 2) throw_dimension("normalize_epoch", "expects [channels, samples]");
  const std::size_t rows = data.dim(0), cols = data.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = data.data().data() + r * cols;
    const auto [lo, hi] = std::minmax_element(row, row + cols);
    if (*lo == *hi) {
      std::fill(row, row + cols, 0.0f);
      continue;
    }
    double s = 0;
    for (std::size_t t = 0; t < cols; ++t) s += row[t];
    const double mean = s / double(cols);
    double ss = 0;
    for (std::size_t t = 0; t < cols; ++t) ss += (row[t] - mean) * (row[t] - mean);
    const double denom = std::sqrt(ss / double(cols)) + 1e-8;
    for (std::size_t t = 0; t < cols; ++t) row[t] = float((row[t] - mean) / denom);
  }
}

const char* to_string(SplitMode mode) {
  return mode == SplitMode::kHoldout ? "holdout" : "kfold";
}

SplitMode parse_split_mode(const std::string& text) {
  if (text == "holdout") return SplitMode::kHoldout;
  if (text == "kfold") return SplitMode::kKFold;
  throw Error(ErrorKind::kConfig, "unknown split mode '" + text + "' (holdout|kfold)");
}

std::vector<std::string> SplitPlan::test_subjects(std::size_t round) const {
  if (round >= rounds()) throw Error(ErrorKind::kConfig, "split round out of range");
  const int wanted = mode == SplitMode::kHoldout ? 1 : static_cast<int>(round);
  std::vector<std::string> out;
  for (const auto& [s, g] : assignment) {
    if (g == wanted) out.push_back(s);
  }
  return out;
}

std::vector<std::string> SplitPlan::train_subjects(std::size_t round) const {
  if (round >= rounds()) throw Error(ErrorKind::kConfig, "split round out of range");
  const int test = mode == SplitMode::kHoldout ? 1 : static_cast<int>(round);
  std::vector<std::string> out;
  for (const auto& [s, g] : assignment) {
    if (g != test) out.push_back(s);
  }
  return out;
}

std::vector<std::size_t> SplitPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(mode == SplitMode::kHoldout ? 2 : folds, 0);
  for (const auto& [_, g] : assignment) ++sizes.at(static_cast<std::size_t>(g));
  return sizes;
}

std::string SplitPlan::to_json() const {
  json j;
  j["mode"] = to_string(mode);
  j["seed"] = seed;
  j["folds"] = folds;
  j["assignment"] = assignment;
  return j.dump();
}

SplitPlan SplitPlan::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SplitPlan p;
    p.mode = parse_split_mode(j.at("mode").get<std::string>());
    p.seed = j.at("seed").get<std::uint64_t>();
    p.folds = j.at("folds").get<std::size_t>();
    p.assignment = j.at("assignment").get<std::map<std::string, int>>();
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("invalid split plan: ") + e.what());
  }
}

SplitPlan make_split(std::vector<std::string> subjects, SplitMode mode, std::uint64_t seed,
                     std::size_t folds) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const std::size_t n = subjects.size();
  if (mode == SplitMode::kHoldout && n < 2) {
    throw Error(ErrorKind::kData, "holdout split needs at least 2 subjects, got " +
                                      std::to_string(n));
  }
  if (mode == SplitMode::kKFold && (folds < 2 || n < folds)) {
    throw Error(ErrorKind::kData, std::to_string(folds) + "-fold split needs at least " +
                                      std::to_string(folds) + " subjects, got " +
                                      std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  SplitPlan plan;
  plan.mode = mode;
  plan.seed = seed;
  if (mode == SplitMode::kHoldout) {
    plan.folds = 2;
    const std::size_t n_train = (4 * n) / 5;
    for (std::size_t i = 0; i < n; ++i) plan.assignment[subjects[i]] = i < n_train ? 0 : 1;
  } else {
    plan.folds = folds;
    const std::size_t base = n / folds, extra = n % folds;
    std::size_t i = 0;
    for (std::size_t f = 0; f < folds; ++f) {
      const std::size_t size = base + (f < extra ? 1 : 0);
      for (std::size_t k = 0; k < size; ++k) plan.assignment[subjects[i++]] = static_cast<int>(f);
    }
  }
  return plan;
}

ClassBalance class_balance_report(std::span<const Epoch> epochs) {
  ClassBalance b;
  for (const Epoch& e : epochs) (e.label == 1 ? b.seizure : b.non_seizure)++;
  if (b.seizure == 0) {
    b.ratio = 0.0;
  } else if (b.non_seizure == 0) {
    b.ratio = std::numeric_limits<double>::infinity();
  } else {
    b.ratio = double(b.seizure) / double(b.non_seizure);
  }
  return b;
}

std::vector<std::string> EpochStore::subjects() const {
  std::set<std::string> s;
  for (const Epoch& e : epochs) s.insert(e.subject_id);
  return {s.begin(), s.end()};
}

void sort_epochs(std::vector<Epoch>& epochs) {
  std::stable_sort(epochs.begin(), epochs.end(), [](const Epoch& a, const Epoch& b) {
    return std::tie(a.subject_id, a.start_s) < std::tie(b.subject_id, b.start_s);
  });
}

std::vector<std::size_t> select_subjects(std::span<const Epoch> epochs,
                                         const std::vector<std::string>& subjects) {
  const std::set<std::string> wanted(subjects.begin(), subjects.end());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    if (wanted.count(epochs[i].subject_id)) idx.push_back(i);
  }
  return idx;
}

void save_epoch_store(const std::filesystem::path& dir, const EpochStore& store) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create '" + dir.string() + "': " + ec.message());

  json manifest;
  manifest["format"] = "nsd-epoch-store";
  manifest["version"] = 1;
  manifest["count"] = store.epochs.size();
  manifest["shape"] = {dsp::kChannelCount, kEpochSamples};
  manifest["seed"] = store.seed;
  json items = json::array();
  std::vector<char> payload;
  payload.reserve(store.epochs.size() * dsp::kChannelCount * kEpochSamples * 4);
  for (const Epoch& e : store.epochs) {
    if (e.data.shape() != Shape{dsp::kChannelCount, kEpochSamples}) {
      throw_dimension("save_epoch_store", "epoch shape " + shape_string(e.data.shape()));
    }
    items.push_back({{"subject", e.subject_id}, {"start_s", e.start_s}, {"label", e.label}});
    io::append_f32_le(payload, e.data.data());
  }
  manifest["epochs"] = std::move(items);
  manifest["subjects"] = store.subjects();
  const auto balance = class_balance_report(store.epochs);
  manifest["class_balance"] = {{"seizure", balance.seizure},
                               {"non_seizure", balance.non_seizure},
                               {"ratio", std::isfinite(balance.ratio) ? json(balance.ratio)
                                                                      : json(nullptr)}};
  manifest["splits"] = json::parse(store.splits_json);
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  io::write_file(dir / "payload.f32", payload);
}

EpochStore load_epoch_store(const std::filesystem::path& dir) {
  const std::string text = io::read_text(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kFormat, "epoch store manifest malformed at byte " +
                                        std::to_string(e.byte) + ": " + e.what());
  }
  EpochStore store;
  std::vector<char> payload;
  try {
    if (manifest.at("format") != "nsd-epoch-store") {
      throw Error(ErrorKind::kFormat, "not an epoch store manifest");
    }
    const auto shape = manifest.at("shape").get<std::vector<std::size_t>>();
    if (shape != std::vector<std::size_t>{dsp::kChannelCount, kEpochSamples}) {
      throw Error(ErrorKind::kFormat, "unsupported epoch shape in manifest");
    }
    store.seed = manifest.value("seed", std::uint64_t{0});
    store.splits_json = manifest.value("splits", json::object()).dump();
    payload = io::read_file(dir / "payload.f32");
    const std::size_t count = manifest.at("count").get<std::size_t>();
    const std::size_t per = dsp::kChannelCount * kEpochSamples;
    if (payload.size() != count * per * 4) {
      throw Error(ErrorKind::kFormat, "epoch payload has " + std::to_string(payload.size()) +
                                          " bytes, manifest declares " +
                                          std::to_string(count * per * 4));
    }
    const auto& items = manifest.at("epochs");
    if (items.size() != count) throw Error(ErrorKind::kFormat, "epoch list length != count");
    store.epochs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Epoch e;
      e.subject_id = items[i].at("subject").get<std::string>();
      e.start_s = items[i].at("start_s").get<std::size_t>();
      e.label = items[i].at("label").get<int>();
      if (e.label != 0 && e.label != 1) throw Error(ErrorKind::kFormat, "label must be 0 or 1");
      e.data = Tensor<float>(Shape{dsp::kChannelCount, kEpochSamples});
      io::decode_f32_le(std::span<const char>(payload.data() + i * per * 4, per * 4),
                        e.data.data());
      store.epochs.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("epoch store manifest: ") + e.what());
  }
  return store;
}

}  // namespace nsd::data
