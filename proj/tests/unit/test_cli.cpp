#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sys/wait.h>

#include "json.hpp"
#include "nsd/dataset.hpp"
#include "nsd/nsd_raw.hpp"
#include "test_support.hpp"

using namespace nsd;
using nsd::testing::TempDir;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

Result nsd_cli(const std::string& args) {
  const std::string cmd = std::string(NSD_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
  TempDir a("cli-a"), b("cli-b");
  const std::string opts = " --seed 4 --subjects 2 --duration 40 --seizure 15";
  ASSERT_EQ(nsd_cli("synth --out " + a.path().string() + opts).status, 0);
  ASSERT_EQ(nsd_cli("synth --out " + b.path().string() + opts).status, 0);
  const auto files = raw::list_recordings(a.path());
  ASSERT_EQ(files.size(), 2u);
  for (const auto& f : files) EXPECT_EQ(slurp(f), slurp(b / f.filename().string())) << f;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(nsd_cli("").status, 2);
  EXPECT_EQ(nsd_cli("train").status, 2);
  EXPECT_EQ(nsd_cli("synth --out /tmp/x --bogus").status, 2);
  EXPECT_EQ(nsd_cli("--help").status, 0);
}

TEST(Cli, MissingInputExitsThree) {
  TempDir out("cli-out");
  const auto r = nsd_cli("preprocess /nonexistent/input --out " + out.path().string());
  EXPECT_EQ(r.status, 3) << r.output;
}

TEST(Cli, CorruptRecordingExitsFour) {
  TempDir in("cli-in"), out("cli-out");
  std::ofstream(in / "bad.nsdraw") << "NSDRAW01garbage";
  EXPECT_EQ(nsd_cli("preprocess " + in.path().string() + " --out " + out.path().string()).status, 4);
}

TEST(Cli, PreprocessEpochCountMatchesLibrary) {
  TempDir raw_dir("cli-raw"), store("cli-store");
  ASSERT_EQ(nsd_cli("synth --out " + raw_dir.path().string() +
                    " --seed 2 --subjects 3 --duration 50 --seizure 20")
                .status,
            0);
  const auto r = nsd_cli("preprocess " + raw_dir.path().string() + " --out " +
                         store.path().string() + " --folds 3");
  ASSERT_EQ(r.status, 0) << r.output;
  std::size_t expect = 0;
  for (const auto& f : raw::list_recordings(raw_dir.path())) {
    expect += data::extract_epochs(dsp::preprocess(raw::read_recording(f))).size();
  }
  const auto loaded = data::load_epoch_store(store.path());
  EXPECT_EQ(loaded.epochs.size(), expect);
  const auto splits = nlohmann::json::parse(loaded.splits_json);
  EXPECT_TRUE(splits.contains("holdout"));
  EXPECT_TRUE(splits.contains("kfold"));
  EXPECT_TRUE(std::filesystem::exists(store / "run.json"));
}

TEST(Cli, GradcheckPrimitivesPass) {
  const auto r = nsd_cli("gradcheck --no-model");
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(r.output.find("FAIL"), std::string::npos);
}

TEST(Cli, BenchWritesReport) {
  TempDir dir("cli-bench");
  const auto path = (dir / "bench.json").string();
  const auto r = nsd_cli("bench --iterations 3 --warmup 1 --out " + path);
  ASSERT_EQ(r.status, 0) << r.output;
  const auto j = nlohmann::json::parse(slurp(path));
  EXPECT_TRUE(j.contains("median_ms"));
}
