// Copyright 2026 The Pale Attention Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "pale/checkpoint.hpp"
#include "pale/harness/bench.hpp"
#include "pale/harness/cli.hpp"
#include "pale/harness/config.hpp"
#include "pale/harness/dataset.hpp"
#include "pale/harness/train.hpp"

namespace pale::harness {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("pale_harness_test_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pale");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

TEST(ConfigTest, DefaultsAndOverrides) {
  const RunConfig c = parse_config("# comment\nmodel.variant = tiny\n\nattn.mode = pale_sequential\npale.s_r = 2\n"
                                   "train.lr = 0.05\nprecision = f64\n");
  EXPECT_EQ(c.attn_mode, AttentionMode::kPaleSequential);
  EXPECT_EQ(c.pale_s_r, 2);
  EXPECT_EQ(c.pale_s_c, 0);
  EXPECT_DOUBLE_EQ(c.train_lr, 0.05);
  EXPECT_EQ(c.precision, Precision::kF64);
  EXPECT_EQ(c.train_steps, RunConfig{}.train_steps);
}

TEST(ConfigTest, CanonicalFormRoundTrips) {
  const RunConfig c = parse_config("seed = 42\nmodel.channels = 8,16,32,64\nmodel.depths=1, 1, 1, 1\n"
                                   "data.size = 48\ntrain.lr = 0.125\n");
  const std::string text = print_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(print_config(parse_config(text)), text);
  EXPECT_EQ(parse_config(print_config(RunConfig{})), RunConfig{});
}

TEST(ConfigTest, RejectsBadInput) {
  EXPECT_THROW(parse_config("model.colour = red\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("seed 1\n"), ConfigError);
  EXPECT_THROW(parse_config("train.steps = many\n"), ConfigError);
  EXPECT_THROW(parse_config("attn.mode = diagonal\n"), ConfigError);
  EXPECT_THROW(parse_config("precision = f16\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/pale.cfg"), ConfigError);
}

TEST(ConfigTest, ModelOverridesApply) {
  RunConfig c;
  set_config_value(c, "model.channels", "16,32,32,32");
  set_config_value(c, "model.depths", "1,1,2,1");
  set_config_value(c, "pale.s_r", "3");
  const VariantConfig m = model_config(c);
  EXPECT_EQ(m.stages[2].channels, 32);
  EXPECT_EQ(m.stages[2].depth, 2);
  EXPECT_EQ(m.stages[0].pale_rows, 3);
  EXPECT_EQ(m.num_classes, 10);
  set_config_value(c, "model.heads", "3,3,3,3");
  EXPECT_THROW(model_config(c), ConfigError);
}

TEST(DatasetTest, DeterministicAndBalanced) {
  const DatasetSpec spec{10, 12, 16, 3, 1};
  const Dataset a = generate_dataset(spec);
  const Dataset b = generate_dataset(spec);
  ASSERT_EQ(a.samples.size(), 120u);
  std::vector<int> per_class(10, 0);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].pixels, b.samples[i].pixels);
    EXPECT_EQ(a.samples[i].label, static_cast<int>(i % 10));
    ++per_class[static_cast<std::size_t>(a.samples[i].label)];
  }
  for (int n : per_class) EXPECT_EQ(n, 12);
  DatasetSpec other = spec;
  other.seed = 2;
  EXPECT_NE(generate_dataset(other).samples[0].pixels, a.samples[0].pixels);
}

TEST(DatasetTest, WrittenTwiceIsByteIdentical) {
  TempDir dir("dataset");
  const Dataset d = generate_dataset({10, 4, 16, 3, 1});
  write_dataset(d, dir.path() / "a");
  write_dataset(generate_dataset({10, 4, 16, 3, 1}), dir.path() / "b");
  for (const auto& entry : fs::directory_iterator(dir.path() / "a")) {
    EXPECT_EQ(slurp(entry.path()), slurp(dir.path() / "b" / entry.path().filename())) << entry.path();
  }
  const std::string manifest = slurp(dir.path() / "a" / "manifest.txt");
  EXPECT_EQ(std::count(manifest.begin(), manifest.end(), '\n'), 40);
  const Dataset back = read_dataset(dir.path() / "a");
  ASSERT_EQ(back.samples.size(), d.samples.size());
  EXPECT_EQ(back.samples[7].pixels, d.samples[7].pixels);
  EXPECT_EQ(back.classes, 10);
}

TEST(DatasetTest, MismatchesAreRejected) {
  TempDir dir("dataset_bad");
  write_dataset(generate_dataset({2, 2, 8, 3, 1}), dir.path());
  fs::resize_file(dir.path() / "sample_00001.f32", 100);
  EXPECT_THROW(read_dataset(dir.path()), DatasetError);
  EXPECT_THROW(read_dataset(dir.path() / "missing"), DatasetError);
  std::ofstream(dir.path() / "manifest.txt") << "sample_00000.f32 0 8 8\n";
  EXPECT_THROW(read_dataset(dir.path()), DatasetError);
}

TEST(DatasetTest, SplitHoldsOutEveryNthPerClass) {
  const Dataset d = generate_dataset({4, 10, 8, 3, 1});
  const Split s = split_dataset(d, 5);
  EXPECT_EQ(s.train.size(), 32u);
  EXPECT_EQ(s.holdout.size(), 8u);
  std::vector<int> held(4, 0);
  for (std::size_t i : s.holdout) ++held[static_cast<std::size_t>(d.samples[i].label)];
  for (int n : held) EXPECT_EQ(n, 2);
  EXPECT_TRUE(split_dataset(d, 0).holdout.empty());
}

TEST(TrainTest, ShortRunIsDeterministicAndParseable) {
  const Dataset d = generate_dataset({4, 8, 32, 3, 3});
  const TrainOptions options{6, 4, 0.1, 2, 4, 5};
  auto run = [&] {
    Model<float> m = Model<float>::create(variant_config("tiny", 4), 5);
    return train(m, d, options);
  };
  const TrainResult a = run();
  const TrainResult b = run();
  ASSERT_EQ(a.records.size(), b.records.size());
  Index last_step = -1;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].to_json(false), b.records[i].to_json(false));
    const auto j = nlohmann::json::parse(a.records[i].to_json());
    EXPECT_TRUE(j.contains("loss"));
    EXPECT_TRUE(j.contains("multiply_adds"));
    EXPECT_GE(a.records[i].step, last_step);
    last_step = a.records[i].step;
    EXPECT_EQ(a.records[i].to_json().find('\n'), std::string::npos);
  }
  EXPECT_EQ(a.records.front().kind, "eval");
  EXPECT_EQ(a.records.back().split, "holdout");
  EXPECT_EQ(a.final_holdout.count, 8);
}

TEST(BenchTest, MedianAndValidation) {
  EXPECT_DOUBLE_EQ(median({5, 1, 3, 2, 4}), 3.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
  BenchOptions options;
  options.shapes = {{8, 8, 16}};
  EXPECT_THROW(run_bench(options), ConfigError);
  options.modes = {AttentionMode::kGlobal, AttentionMode::kPaleParallel};
  options.spec = {2, 2, true};
  options.repeats = 5;
  const auto rows = run_bench(options);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].samples_ms.size(), 5u);
  EXPECT_EQ(rows[0].multiply_adds, 196608 + 27 * 64 * 16);
  EXPECT_EQ(rows[1].multiply_adds, 125952);
  EXPECT_EQ(bench_csv_line(rows[1]).rfind("pale_parallel,8,8,16,2,2,125952,", 0), 0u);
}

TEST(CliTest, PartitionPrintsGroupsAndCount) {
  const CliRun r = cli({"partition", "4", "4", "2", "2"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("group 0: {0,2}"), std::string::npos);
  EXPECT_NE(r.out.find("group 1: {1,3}"), std::string::npos);
  EXPECT_NE(r.out.find("pale token count: 12"), std::string::npos);
  EXPECT_NE(cli({"partition", "56", "56", "7", "7"}).out.find("pale token count: 735"), std::string::npos);
  const CliRun cross = cli({"partition", "8", "8", "2", "2", "--mode", "cross"});
  EXPECT_NE(cross.out.find("contiguous"), std::string::npos);
  EXPECT_NE(cross.out.find("group 0: {0,1}"), std::string::npos);
}

TEST(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"partition", "5", "4", "2", "2"}).code, kExitUsage);
  EXPECT_EQ(cli({"partition", "0", "4", "2", "2"}).code, kExitUsage);
  EXPECT_EQ(cli({"partition", "4", "4"}).code, kExitUsage);
  EXPECT_EQ(cli({"--precision", "f16", "audit"}).code, kExitUsage);
  EXPECT_EQ(cli({"bench", "--modes", ""}).code, kExitUsage);
  EXPECT_EQ(cli({"bench", "--modes", "diagonal"}).code, kExitUsage);
  EXPECT_EQ(cli({"verify", "--suite", "everything"}).code, kExitUsage);
  EXPECT_EQ(cli({"--set", "model.colour=red", "verify", "--suite", "partition"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(CliTest, AuditReportsTargets) {
  const CliRun r = cli({"audit", "--variant", "T"});
  EXPECT_EQ(r.code, kExitOk);
  std::istringstream lines(r.out);
  std::string line, last;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["variant"], "T");
    last = line;
    ++count;
  }
  EXPECT_EQ(count, 6);
  const auto total = nlohmann::json::parse(last);
  EXPECT_EQ(total["status"], "PASS");
  EXPECT_EQ(total["params"], 21715688);
}

TEST(CliTest, InjectedFaultFailsVerification) {
  const CliRun r = cli({"verify", "--suite", "padding", "--inject-fault", "skip-mask"});
  EXPECT_EQ(r.code, kExitVerifyFailed);
  EXPECT_NE(r.out.find("padding independence violated"), std::string::npos);
  EXPECT_EQ(cli({"verify", "--suite", "partition"}).code, kExitOk);
}

TEST(CliTest, GenerateTrainEvaluateBench) {
  TempDir dir("cli");
  const std::string data = dir / "data";
  EXPECT_EQ(cli({"--out", data, "--set", "data.per_class=5", "--set", "data.classes=3", "gen-data"}).code, kExitOk);
  EXPECT_EQ(cli({"train", "--data", dir / "missing", "--out", dir / "run"}).code, kExitUsage);

  const std::vector<std::string> train_args{"--set", "train.steps=3", "--set", "train.batch=4", "--set",
                                            "model.classes=3", "--seed", "4", "train", "--data", data};
  std::vector<std::string> first = train_args, second = train_args;
  first.insert(first.end(), {"--out", dir / "run1"});
  second.insert(second.end(), {"--out", dir / "run2"});
  const CliRun t1 = cli(first);
  ASSERT_EQ(t1.code, kExitOk) << t1.err;
  ASSERT_EQ(cli(second).code, kExitOk);
  EXPECT_EQ(slurp(dir.path() / "run1" / "checkpoint.pale"), slurp(dir.path() / "run2" / "checkpoint.pale"));
  std::istringstream metrics(slurp(dir.path() / "run1" / "metrics.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    EXPECT_NO_THROW(nlohmann::json::parse(line));
    ++lines;
  }
  EXPECT_GE(lines, 4);

  const CliRun ev = cli({"--set", "model.classes=3", "eval", "--checkpoint", dir / "run1/checkpoint.pale", "--data", data});
  EXPECT_EQ(ev.code, kExitOk) << ev.err;
  EXPECT_NE(ev.out.find("\"split\":\"holdout\""), std::string::npos);
  EXPECT_EQ(cli({"eval", "--checkpoint", dir / "run1/checkpoint.pale", "--data", data, "--set", "model.classes=4"}).code,
            kExitUsage);

  const std::string csv = dir / "bench.csv";
  EXPECT_EQ(cli({"--out", csv, "bench", "--modes", "global,axial", "--shapes", "8x8x16", "--s-r", "2", "--s-c", "2",
                 "--repeats", "2"})
                .code,
            kExitOk);
  const std::string table = slurp(csv);
  EXPECT_EQ(table.rfind(std::string(kBenchHeader) + "\n", 0), 0u);
  EXPECT_NE(table.find("\naxial,8,8,16,1,1,"), std::string::npos);
}

}  // namespace
}  // namespace pale::harness
