#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "nsd/dataset.hpp"
#include "nsd/error.hpp"

namespace nsd::cli {

/// Process exit status per failure class.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitFormat = 4,
  kExitData = 5,
  kExitNumeric = 6,
  kExitCheckFailed = 7,
  kExitConfig = 8,
  kExitDimension = 9,
  kExitDesign = 10,
};

int exit_code(ErrorKind kind);

struct SynthArgs {
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t subjects = 10;
  double duration_s = 90;
  double seizure_s = 30;
};

struct PreprocessArgs {
  std::filesystem::path input;  // directory of .nsdraw files or a single file
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t folds = 10;
};

struct TrainArgs {
  std::filesystem::path store;
  std::filesystem::path out;
  data::SplitMode split = data::SplitMode::kHoldout;
  std::uint64_t seed = 0;
  std::size_t epochs = 200;
  std::size_t batch = 32;
  std::size_t patience = 20;
  double lr = 0.002;
  double validation_fraction = 0.1;
  std::optional<std::size_t> fold;  // k-fold: run one fold only
  bool quiet = false;
};

struct EvaluateArgs {
  std::filesystem::path checkpoint;  // checkpoint dir, or a train output with fold-* dirs
  std::filesystem::path store;
  std::filesystem::path out;          // report stem: <out>.json and <out>.csv
  bool all_subjects = false;          // ignore the recorded test subjects
};

struct ExplainArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path recording;
  std::filesystem::path out;
  bool heatmaps = true;
};

struct StreamArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> replay;  // NSD-RAW file; stdin otherwise
  bool latency = false;
  bool pretty = false;
};

struct GradcheckArgs {
  std::uint64_t seed = 0;
  bool model = true;
  std::optional<std::filesystem::path> out;
};

struct BenchArgs {
  std::optional<std::filesystem::path> checkpoint;
  std::size_t iterations = 100;
  std::size_t warmup = 10;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;
};

// Each returns a process exit status; library errors propagate as nsd::Error.
int run_synth(const SynthArgs& args, std::ostream& out);
int run_preprocess(const PreprocessArgs& args, std::ostream& out);
int run_train(const TrainArgs& args, std::ostream& out);
int run_evaluate(const EvaluateArgs& args, std::ostream& out);
int run_explain(const ExplainArgs& args, std::ostream& out);
int run_stream(const StreamArgs& args, std::istream& in, std::ostream& out, std::ostream& log);
int run_gradcheck(const GradcheckArgs& args, std::ostream& out);
int run_bench(const BenchArgs& args, std::ostream& out);

}  // namespace nsd::cli
