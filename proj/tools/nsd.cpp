// nsd: neonatal EEG seizure detection command-line tool.

#include <iostream>

#include "CLI11.hpp"
#include "nsd/cli_app.hpp"
#include "nsd/error.hpp"

using namespace nsd;

namespace {

data::SplitMode split_mode(const std::string& text) { return data::parse_split_mode(text); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neonatal EEG seizure detection: preprocessing, training, evaluation, explanation"};
  app.require_subcommand(1);

  cli::SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic NSD-RAW corpus");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Random seed");
  c_synth->add_option("--subjects", synth.subjects, "Number of recordings");
  c_synth->add_option("--duration", synth.duration_s, "Recording length in seconds");
  c_synth->add_option("--seizure", synth.seizure_s, "Seizure length in seconds");

  cli::PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "NSD-RAW recordings -> epoch store");
  c_pre->add_option("input", pre.input, "Directory of .nsdraw files (or one file)")->required();
  c_pre->add_option("--out", pre.out, "Epoch store directory")->required();
  c_pre->add_option("--seed", pre.seed, "Split seed");
  c_pre->add_option("--folds", pre.folds, "Cross-validation folds");

  cli::TrainArgs tr;
  std::string split = "holdout";
  std::size_t fold = 0;
  auto* c_train = app.add_subcommand("train", "Train on an epoch store");
  c_train->add_option("store", tr.store, "Epoch store directory")->required();
  c_train->add_option("--out", tr.out, "Checkpoint directory")->required();
  c_train->add_option("--split", split, "holdout or kfold")->check(CLI::IsMember({"holdout", "kfold"}));
  c_train->add_option("--seed", tr.seed, "Seed for initialization, batching and dropout");
  c_train->add_option("--epochs", tr.epochs, "Maximum training epochs");
  c_train->add_option("--batch", tr.batch, "Mini-batch size");
  c_train->add_option("--patience", tr.patience, "Early-stop patience in epochs");
  c_train->add_option("--lr", tr.lr, "Adam learning rate");
  c_train->add_option("--val-fraction", tr.validation_fraction, "Share of training subjects held for validation");
  auto* fold_opt = c_train->add_option("--fold", fold, "Run one k-fold round only");

  cli::EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score a checkpoint on its test subjects");
  c_eval->add_option("checkpoint", ev.checkpoint, "Checkpoint (or k-fold training) directory")->required();
  c_eval->add_option("store", ev.store, "Epoch store directory")->required();
  c_eval->add_option("--out", ev.out, "Report path stem (writes .json and .csv)");
  c_eval->add_flag("--all-subjects", ev.all_subjects, "Evaluate every subject in the store");

  cli::ExplainArgs ex;
  bool no_heatmaps = false;
  auto* c_explain = app.add_subcommand("explain", "Probability series and Grad-CAM heatmaps for a recording");
  c_explain->add_option("checkpoint", ex.checkpoint, "Checkpoint directory")->required();
  c_explain->add_option("recording", ex.recording, "NSD-RAW recording")->required();
  c_explain->add_option("--out", ex.out, "Output directory")->required();
  c_explain->add_flag("--no-heatmaps", no_heatmaps, "Only write the probability series");

  cli::StreamArgs st;
  std::string replay;
  auto* c_stream = app.add_subcommand("stream", "Streaming inference over stdin chunks or a replayed file");
  c_stream->add_option("checkpoint", st.checkpoint, "Checkpoint directory")->required();
  auto* replay_opt = c_stream->add_option("--replay", replay, "NSD-RAW file to replay instead of stdin");
  c_stream->add_flag("--latency", st.latency, "Report per-decision latency");
  c_stream->add_flag("--pretty", st.pretty, "Human-readable output");

  cli::GradcheckArgs gc;
  bool no_model = false;
  std::string gc_out;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  c_gc->add_option("--seed", gc.seed, "Random seed");
  c_gc->add_flag("--no-model", no_model, "Skip the end-to-end model check");
  auto* gc_out_opt = c_gc->add_option("--out", gc_out, "JSON report path");

  cli::BenchArgs bn;
  std::string bench_ckpt, bench_out;
  auto* c_bench = app.add_subcommand("bench", "Single-thread inference latency");
  auto* bench_ckpt_opt = c_bench->add_option("--checkpoint", bench_ckpt, "Checkpoint (default: fresh model)");
  c_bench->add_option("--iterations", bn.iterations, "Measured iterations");
  c_bench->add_option("--warmup", bn.warmup, "Warm-up iterations");
  c_bench->add_option("--seed", bn.seed, "Random seed");
  auto* bench_out_opt = c_bench->add_option("--out", bench_out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  try {
    if (*c_synth) return cli::run_synth(synth, std::cout);
    if (*c_pre) return cli::run_preprocess(pre, std::cout);
    if (*c_train) {
      tr.split = split_mode(split);
      if (*fold_opt) tr.fold = fold;
      return cli::run_train(tr, std::cout);
    }
    if (*c_eval) return cli::run_evaluate(ev, std::cout);
    if (*c_explain) {
      ex.heatmaps = !no_heatmaps;
      return cli::run_explain(ex, std::cout);
    }
    if (*c_stream) {
      if (*replay_opt) st.replay = replay;
      return cli::run_stream(st, std::cin, std::cout, std::cerr);
    }
    if (*c_gc) {
      gc.model = !no_model;
      if (*gc_out_opt) gc.out = gc_out;
      return cli::run_gradcheck(gc, std::cout);
    }
    if (*c_bench) {
      if (*bench_ckpt_opt) bn.checkpoint = bench_ckpt;
      if (*bench_out_opt) bn.out = bench_out;
      return cli::run_bench(bn, std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "nsd: " << to_string(e.kind()) << " error: " << e.what() << "\n";
    return cli::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "nsd: internal error: " << e.what() << "\n";
    return cli::kExitInternal;
  }
  return cli::kExitUsage;
}
