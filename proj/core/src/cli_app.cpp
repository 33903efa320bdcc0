#include "nsd/cli_app.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "nsd/bench.hpp"
#include "nsd/binary_io.hpp"
#include "nsd/digest.hpp"
#include "nsd/dsp.hpp"
#include "nsd/explain.hpp"
#include "nsd/gradcheck.hpp"
#include "nsd/metrics.hpp"
#include "nsd/model.hpp"
#include "nsd/nsd_raw.hpp"
#include "nsd/stream.hpp"
#include "nsd/synth.hpp"
#include "nsd/train.hpp"

namespace nsd::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return kExitIo;
    case ErrorKind::kFormat: return kExitFormat;
    case ErrorKind::kData: return kExitData;
    case ErrorKind::kNumeric: return kExitNumeric;
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kDimension: return kExitDimension;
    case ErrorKind::kDesign: return kExitDesign;
  }
  return kExitInternal;
}

namespace {

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create '" + dir.string() + "': " + ec.message());
}

bool digestible(const fs::path& p) {
  const auto ext = p.extension();
  return ext == raw::kExtension || ext == ".f32" || p.filename() == "manifest.json";
}

// SHA-256 of an input file, or of the data files inside an input directory.
json digests(const fs::path& input) {
  json out = json::object();
  if (fs::is_regular_file(input)) {
    out[input.string()] = file_digest(input);
    return out;
  }
  if (!fs::is_directory(input)) throw Error(ErrorKind::kIo, "'" + input.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file() && digestible(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out[f.string()] = file_digest(f);
  return out;
}

void write_run_manifest(const fs::path& path, const std::string& command, std::uint64_t seed,
                        const std::string& config_hash, json inputs, json extra = json::object()) {
  json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["inputs"] = std::move(inputs);
  j["details"] = std::move(extra);
  io::write_text(path, j.dump(2) + "\n");
}

std::vector<data::Epoch> pick(const std::vector<data::Epoch>& all, const std::vector<std::string>& subjects) {
  std::vector<data::Epoch> out;
  for (std::size_t i : data::select_subjects(all, subjects)) out.push_back(all[i]);
  return out;
}

}  // namespace

int run_synth(const SynthArgs& args, std::ostream& out) {
  make_dirs(args.out);
  synth::CorpusSpec spec{args.subjects, args.duration_s, args.seizure_s, args.seed};
  json files = json::object();
  for (const auto& s : synth::corpus(spec)) {
    const fs::path path = args.out / (s.subject_id + raw::kExtension);
    raw::write_recording(path, synth::generate(s));
    files[path.filename().string()] = {{"sha256", file_digest(path)},
                                       {"seizure", {s.seizures.front().begin_s, s.seizures.front().end_s}}};
  }
  write_run_manifest(args.out / "run.json", "synth", args.seed, "", json::object(),
                     {{"subjects", args.subjects},
                      {"duration_s", args.duration_s},
                      {"seizure_s", args.seizure_s},
                      {"outputs", files}});
  out << "wrote " << args.subjects << " recordings to " << args.out.string() << "\n";
  return kExitOk;
}

int run_preprocess(const PreprocessArgs& args, std::ostream& out) {
  std::vector<fs::path> inputs;
  if (fs::is_regular_file(args.input)) {
    inputs.push_back(args.input);
  } else {
    inputs = raw::list_recordings(args.input);
  }
  if (inputs.empty()) throw Error(ErrorKind::kData, "no NSD-RAW recordings in " + args.input.string());

  data::EpochStore store;
  store.seed = args.seed;
  json per_subject = json::object();
  for (const auto& path : inputs) {
    const auto recording = raw::read_recording(path);
    const auto clean = dsp::preprocess(recording);
    auto epochs = data::extract_epochs(clean);
    const auto balance = data::class_balance_report(epochs);
    per_subject[recording.subject_id] = {{"seizure", balance.seizure}, {"non_seizure", balance.non_seizure}};
    out << recording.subject_id << ": " << balance.seizure << " seizure, " << balance.non_seizure
        << " non-seizure epochs\n";
    for (auto& e : epochs) store.epochs.push_back(std::move(e));
  }
  data::sort_epochs(store.epochs);
  const auto subjects = store.subjects();
  json splits;
  splits["holdout"] = json::parse(data::make_split(subjects, data::SplitMode::kHoldout, args.seed).to_json());
  if (subjects.size() >= 2) {
    const std::size_t k = std::min(args.folds, subjects.size());
    splits["kfold"] = json::parse(data::make_split(subjects, data::SplitMode::kKFold, args.seed, k).to_json());
  }
  store.splits_json = splits.dump();
  data::save_epoch_store(args.out, store);
  write_run_manifest(args.out / "run.json", "preprocess", args.seed, "", digests(args.input),
                     {{"epochs", store.epochs.size()}, {"subjects", per_subject}});
  out << "epoch store: " << store.epochs.size() << " epochs from " << subjects.size()
      << " subjects -> " << args.out.string() << "\n";
  return kExitOk;
}

int run_train(const TrainArgs& args, std::ostream& out) {
  const auto store = data::load_epoch_store(args.store);
  const json splits = json::parse(store.splits_json);
  const char* mode = data::to_string(args.split);
  if (!splits.contains(mode)) {
    throw Error(ErrorKind::kData, std::string("epoch store has no ") + mode + " split");
  }
  const auto plan = data::SplitPlan::from_json(splits.at(mode).dump());

  train::TrainConfig config;
  config.model.seed = args.seed;
  config.seed = args.seed;
  config.max_epochs = args.epochs;
  config.batch_size = args.batch;
  config.patience = args.patience;
  config.adam.lr = args.lr;
  const json inputs = digests(args.store);

  std::vector<std::size_t> rounds;
  if (args.fold) {
    if (*args.fold >= plan.rounds()) throw Error(ErrorKind::kConfig, "fold index out of range");
    rounds.push_back(*args.fold);
  } else {
    for (std::size_t r = 0; r < plan.rounds(); ++r) rounds.push_back(r);
  }

  for (std::size_t r : rounds) {
    char name[32];
    std::snprintf(name, sizeof name, "fold-%02zu", r);
    const fs::path dir = args.split == data::SplitMode::kHoldout ? args.out : args.out / name;
    make_dirs(dir);
    auto [fit_subjects, val_subjects] =
        train::carve_validation(plan.train_subjects(r), args.validation_fraction, args.seed + r);
    const auto fit = pick(store.epochs, fit_subjects);
    const auto val = pick(store.epochs, val_subjects);
    out << mode << " round " << r << ": " << fit.size() << " training epochs ("
        << fit_subjects.size() << " subjects), " << val.size() << " validation epochs ("
        << val_subjects.size() << " subjects)\n";

    std::ofstream log(dir / "train_log.jsonl");
    if (!log) throw Error(ErrorKind::kIo, "cannot write " + (dir / "train_log.jsonl").string());
    const auto result = train::train_loop(fit, val, config, &log);

    json meta = {{"split", mode},
                 {"round", r},
                 {"test_subjects", plan.test_subjects(r)},
                 {"fit_subjects", fit_subjects},
                 {"validation_subjects", val_subjects},
                 {"best_epoch", result.best_epoch},
                 {"epochs_run", result.history.size()},
                 {"stopped_early", result.stopped_early},
                 {"train_config", json::parse(config.to_json())}};
    model::save_checkpoint(result.model, dir, {meta.dump(), "{}"});

    train::RunManifest manifest;
    manifest.seed = args.seed;
    manifest.config_hash = config.model.hash();
    manifest.config_json = config.to_json();
    manifest.split_json = plan.to_json();
    manifest.history = result.history;
    manifest.best_epoch = result.best_epoch;
    manifest.wall_clock_s = result.seconds;
    manifest.checkpoint_path = dir.string();
    for (auto it = inputs.begin(); it != inputs.end(); ++it) {
      manifest.input_digests[it.key()] = it.value().get<std::string>();
    }
    io::write_text(dir / "run.json", manifest.to_json() + "\n");
    const auto& last = result.history.back();
    out << "  " << result.history.size() << " epochs in " << result.seconds << " s, best epoch "
        << result.best_epoch << ", final train loss " << last.train_loss << ", train accuracy "
        << last.train_accuracy << "\n";
  }
  return kExitOk;
}

int run_evaluate(const EvaluateArgs& args, std::ostream& out) {
  std::vector<fs::path> dirs;
  if (fs::exists(args.checkpoint / "manifest.json")) {
    dirs.push_back(args.checkpoint);
  } else if (fs::is_directory(args.checkpoint)) {
    for (const auto& e : fs::directory_iterator(args.checkpoint)) {
      if (e.is_directory() && e.path().filename().string().starts_with("fold-") &&
          fs::exists(e.path() / "manifest.json")) {
        dirs.push_back(e.path());
      }
    }
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) throw Error(ErrorKind::kIo, "no checkpoint found at " + args.checkpoint.string());

  const auto store = data::load_epoch_store(args.store);
  std::vector<metrics::FoldReport> folds;
  json inputs = digests(args.store);
  std::string config_hash;
  for (std::size_t f = 0; f < dirs.size(); ++f) {
    model::CheckpointMeta meta;
    const auto net = model::load_checkpoint(dirs[f], &meta);
    config_hash = net.config().hash();
    inputs.update(digests(dirs[f]));
    const json training = json::parse(meta.training_json);
    std::vector<std::string> subjects = store.subjects();
    if (!args.all_subjects && training.contains("test_subjects")) {
      subjects = training.at("test_subjects").get<std::vector<std::string>>();
    }
    const auto epochs = pick(store.epochs, subjects);
    if (epochs.empty()) throw Error(ErrorKind::kData, "no epochs for the evaluation subjects");
    std::vector<Tensor<float>> batch;
    std::vector<int> labels;
    for (const auto& e : epochs) {
      batch.push_back(e.data);
      labels.push_back(e.label);
    }
    const auto scores = model::predict(net, batch);
    folds.push_back(metrics::evaluate_fold(scores, labels, training.value("round", f)));
    for (const auto& w : folds.back().warnings) out << "warning: fold " << f << ": " << w << "\n";
  }
  const auto report = metrics::aggregate_folds(std::move(folds));
  const fs::path stem = args.out.empty() ? args.checkpoint / "evaluation" : args.out;
  if (stem.has_parent_path()) make_dirs(stem.parent_path());
  io::write_text(fs::path(stem.string() + ".json"), report.to_json() + "\n");
  io::write_text(fs::path(stem.string() + ".csv"), report.to_csv());
  write_run_manifest(fs::path(stem.string() + ".run.json"), "evaluate", 0, config_hash, inputs);

  char line[256];
  std::snprintf(line, sizeof line,
                "folds %zu  AUC %.4f (median %.4f, IQR %.4f-%.4f)  accuracy %.4f  recall %.4f  "
                "precision %.4f  kappa %.4f\n",
                report.folds.size(), report.auc.mean, report.auc.median, report.auc.q1,
                report.auc.q3, report.accuracy.mean, report.recall.mean, report.precision.mean,
                report.kappa.mean);
  out << line;
  return kExitOk;
}

int run_explain(const ExplainArgs& args, std::ostream& out) {
  const auto net = model::load_checkpoint(args.checkpoint);
  const auto recording = raw::read_recording(args.recording);
  const auto clean = dsp::preprocess(recording);
  explain::ExplainOptions options;
  options.heatmaps = args.heatmaps;
  const auto points = explain::explain_stream(net, clean, options);

  make_dirs(args.out);
  if (args.heatmaps) make_dirs(args.out / "heatmaps");
  std::string series;
  std::size_t positives = 0;
  for (const auto& p : points) {
    const std::size_t last_second = p.t + data::kEpochSeconds - 1;
    const int label = last_second < clean.labels.size() ? int(clean.labels[last_second]) : -1;
    json j = {{"t", p.t}, {"probability", p.probability}, {"seizure", p.probability > 0.5f},
              {"label", label}};
    if (p.heatmap) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "t%06zu", p.t);
      const fs::path base = args.out / "heatmaps" / stem;
      explain::render_heatmap(*p.heatmap, explain::window_at(clean, p.t), base);
      j["heatmap_path"] = (fs::path("heatmaps") / (std::string(stem) + ".svg")).string();
      ++positives;
    }
    series += j.dump() + "\n";
  }
  io::write_text(args.out / "series.jsonl", series);
  json inputs = digests(args.recording);
  inputs.update(digests(args.checkpoint));
  write_run_manifest(args.out / "run.json", "explain", 0, net.config().hash(), inputs,
                     {{"windows", points.size()}, {"seizure_windows", positives}});
  out << points.size() << " windows, " << positives << " classified as seizure -> "
      << args.out.string() << "\n";
  return kExitOk;
}

int run_stream(const StreamArgs& args, std::istream& in, std::ostream& out, std::ostream& log) {
  const auto net = model::load_checkpoint(args.checkpoint);
  std::optional<dsp::CleanSignal> clean;
  stream::ChunkSource source;
  if (args.replay) {
    clean = dsp::preprocess(raw::read_recording(*args.replay));
    source = stream::replay_source(*clean);
  } else {
    source = stream::json_lines_source(in);
  }
  stream::StreamOptions options;
  options.measure_latency = args.latency;
  auto emit = [&](const std::string& line) {
    if (!args.pretty) {
      out << line << "\n" << std::flush;
      return;
    }
    const json j = json::parse(line);
    char buf[128];
    std::snprintf(buf, sizeof buf, "t=%6zu s  p=%.4f  %s", j.at("t").get<std::size_t>(),
                  j.at("probability").get<double>(),
                  j.at("seizure").get<bool>() ? "SEIZURE" : "-");
    out << buf;
    if (j.contains("latency_ms")) out << "  " << j.at("latency_ms").get<double>() << " ms";
    out << "\n" << std::flush;
  };
  auto note = [&](const std::string& line) { log << line << "\n" << std::flush; };
  const auto stats = stream::run_stream(net, source, emit, note, options);
  log << json{{"event", "end"}, {"chunks", stats.chunks}, {"decisions", stats.decisions},
              {"discontinuities", stats.discontinuities}}
             .dump()
      << "\n";
  return kExitOk;
}

int run_gradcheck(const GradcheckArgs& args, std::ostream& out) {
  auto results = gradcheck::primitive_suite(args.seed);
  if (args.model) {
    gradcheck::ModelCheckOptions options;
    options.seed = args.seed;
    model::ModelConfig config;
    config.seed = args.seed;
    results.push_back(gradcheck::model_check(config, options));
  }
  bool ok = true;
  char buf[256];
  for (const auto& r : results) {
    ok = ok && r.passed();
    std::snprintf(buf, sizeof buf, "%s %-28s checked %5zu  max rel err %.3e  (tol %.0e)\n",
                  r.passed() ? "PASS" : "FAIL", r.name.c_str(), r.checked, r.max_rel_err,
                  r.tolerance);
    out << buf;
  }
  if (args.out) io::write_text(*args.out, gradcheck::to_json(results) + "\n");
  return ok ? kExitOk : kExitCheckFailed;
}

int run_bench(const BenchArgs& args, std::ostream& out) {
  model::ModelConfig config;
  config.seed = args.seed;
  const auto net = args.checkpoint ? model::load_checkpoint(*args.checkpoint) : model::Model<float>(config);
  const auto report = bench::bench_latency(net, args.iterations, args.warmup, args.seed);
  const std::string text = report.to_json();
  if (args.out) io::write_text(*args.out, text + "\n");
  out << text << "\n";
  return kExitOk;
}

}  // namespace nsd::cli
