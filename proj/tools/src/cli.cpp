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

#include "pale/harness/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pale/checkpoint.hpp"
#include "pale/complexity.hpp"
#include "pale/harness/audit.hpp"
#include "pale/harness/bench.hpp"
#include "pale/harness/config.hpp"
#include "pale/harness/dataset.hpp"
#include "pale/harness/train.hpp"
#include "pale/harness/verify.hpp"
#include "pale/partition.hpp"

namespace pale::harness {

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string precision;
  std::string out;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig config = flags.config.empty() ? RunConfig{} : load_config(flags.config);
  for (const std::string& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.seed) config.seed = *flags.seed;
  if (!flags.precision.empty()) config.precision = parse_precision(flags.precision);
  return config;
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

Index parse_index(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad " + what + ": '" + text + "'");
  }
  if (used != text.size() || v <= 0) throw ConfigError("bad " + what + ": '" + text + "'");
  return static_cast<Index>(v);
}

// ---- partition ----

struct PartitionArgs {
  Index h = 0, w = 0, s_r = 0, s_c = 0;
  std::string mode = "pale";
};

int cmd_partition(const PartitionArgs& a, std::ostream& out) {
  if (a.h <= 0 || a.w <= 0 || a.s_r <= 0 || a.s_c <= 0) {
    throw ShapeError("partition: extents and pale size must be positive");
  }
  AttentionMode mode = AttentionMode::kPaleParallel;
  if (a.mode == "cross") {
    mode = AttentionMode::kCrossShaped;
  } else if (a.mode == "axial") {
    mode = AttentionMode::kAxial;
  } else if (a.mode != "pale") {
    throw ConfigError("partition: unknown mode '" + a.mode + "' (pale | cross | axial)");
  }
  const PartitionSpec spec = effective_spec(mode, PartitionSpec{a.s_r, a.s_c, true});
  const IndexGroups rows = build_groups(a.h, a.w, spec, Axis::kRow);
  const IndexGroups cols = build_groups(a.h, a.w, spec, Axis::kColumn);
  out << "map " << a.h << "x" << a.w << ", mode " << a.mode << ", s_r " << spec.rows << ", s_c " << spec.cols
      << ", " << (spec.interlaced ? "interlaced" : "contiguous") << "\n";
  out << "row groups (" << rows.group_count() << "):\n" << describe_groups(rows);
  out << "column groups (" << cols.group_count() << "):\n" << describe_groups(cols);
  out << "pale token count: " << pale_token_count(a.h, a.w, spec.rows, spec.cols) << "\n";
  return kExitOk;
}

// ---- audit ----

struct AuditArgs {
  std::string variant = "all";
  Index size = 224;
  Index pale = 0;
  bool layers = false;
};

int cmd_audit(const AuditArgs& a, std::ostream& out) {
  std::vector<std::string> names;
  if (a.variant == "all") {
    names = {"T", "S", "B"};
  } else {
    names = {a.variant};
  }
  bool ok = true;
  for (const std::string& name : names) {
    VariantConfig config = variant_config(name, 1000);
    if (a.pale > 0) {
      for (StageConfig& s : config.stages) s.pale_rows = s.pale_cols = a.pale;
    }
    const AuditReport report = audit_variant(config, a.size, a.size);
    if (a.layers) {
      for (const LayerFlops& layer : model_flops(config, a.size, a.size).layers) {
        nlohmann::ordered_json j;
        j["variant"] = config.name;
        j["layer"] = layer.name;
        j["multiply_adds"] = layer.multiply_adds;
        j["norm_ops"] = layer.norm_ops;
        j["softmax_ops"] = layer.softmax_ops;
        j["elementwise_ops"] = layer.elementwise_ops;
        out << j.dump() << "\n";
      }
    }
    for (const std::string& line : report.json_lines()) out << line << "\n";
    ok = ok && report.passed();
  }
  return ok ? kExitOk : kExitVerifyFailed;
}

// ---- verify ----

struct VerifyArgs {
  std::string suite = "all";
  std::string fault;
};

int cmd_verify(const VerifyArgs& a, const RunConfig& config, std::ostream& out) {
  static const std::vector<std::string> kSuites = {"partition", "flops", "equiv", "padding", "gradcheck"};
  std::vector<std::string> selected;
  if (a.suite == "all") {
    selected = kSuites;
  } else if (a.suite == "equiv") {
    selected = {"equiv", "padding"};
  } else {
    selected = {a.suite};
  }
  const MaskPolicy policy = a.fault == "skip-mask" ? MaskPolicy::kIgnore : MaskPolicy::kApply;
  if (policy == MaskPolicy::kIgnore && std::find(selected.begin(), selected.end(), "padding") == selected.end()) {
    selected.push_back("padding");
  }

  bool ok = true;
  for (const std::string& name : selected) {
    SuiteResult result;
    if (name == "partition") {
      result = run_partition_suite();
    } else if (name == "flops") {
      result = run_flops_suite();
    } else if (name == "equiv") {
      EquivOptions options;
      options.precision = config.precision;
      options.seed = config.seed;
      result = run_equiv_suite(options);
    } else if (name == "padding") {
      result = run_padding_suite(config.precision, policy);
    } else {
      result = run_gradcheck_suite();
    }
    out << describe(result);
    ok = ok && result.passed();
  }
  out << "verify: " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitVerifyFailed;
}

// ---- gen-data ----

int cmd_gen_data(const RunConfig& config, const std::string& out_dir, std::ostream& out) {
  const DatasetSpec spec{config.data_classes, config.data_per_class, config.data_size, 3, config.seed};
  const Dataset dataset = generate_dataset(spec);
  const std::filesystem::path dir = out_dir.empty() ? config.data_dir : out_dir;
  write_dataset(dataset, dir);
  nlohmann::ordered_json j;
  j["dir"] = dir.string();
  j["samples"] = dataset.samples.size();
  j["classes"] = dataset.classes;
  j["size"] = spec.size;
  j["seed"] = spec.seed;
  out << j.dump() << "\n";
  return kExitOk;
}

// ---- train / eval ----

void check_labels(const Dataset& dataset, const VariantConfig& model) {
  for (const Sample& s : dataset.samples) {
    if (s.label < 0 || s.label >= model.num_classes) {
      throw DatasetError("label " + std::to_string(s.label) + " of " + s.file + " exceeds model.classes = " +
                         std::to_string(model.num_classes));
    }
    if (s.c != model.in_channels) throw DatasetError("channel count of " + s.file + " does not match the model");
  }
}

template <typename T>
int train_typed(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& dir,
                std::ostream& out) {
  Model<T> model = Model<T>::create(model_config(config), config.seed);
  const TrainOptions options{config.train_steps, config.train_batch,         config.train_lr,
                             config.train_log_every, config.train_holdout_every, config.seed};
  std::filesystem::create_directories(dir);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());
  train(model, dataset, options, [&](const MetricsRecord& r) {
    const std::string line = r.to_json();
    metrics << line << "\n";
    metrics.flush();
    out << line << "\n";
  });
  save_checkpoint(model, dir / "checkpoint.pale");
  return kExitOk;
}

int cmd_train(const RunConfig& config, const std::string& data_dir, const std::string& out_dir, std::ostream& out) {
  const Dataset dataset = read_dataset(std::filesystem::path(data_dir.empty() ? config.data_dir : data_dir));
  check_labels(dataset, model_config(config));
  const std::filesystem::path dir = out_dir.empty() ? std::string("run") : out_dir;
  return config.precision == Precision::kF64 ? train_typed<double>(config, dataset, dir, out)
                                             : train_typed<float>(config, dataset, dir, out);
}

template <typename T>
void eval_typed(const RunConfig& config, const std::filesystem::path& checkpoint, const Dataset& dataset,
                std::ostream& out) {
  const Model<T> model = load_checkpoint<T>(checkpoint, model_config(config));
  const Split split = split_dataset(dataset, config.train_holdout_every);
  std::vector<std::size_t> all(dataset.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const std::pair<const char*, const std::vector<std::size_t>*> parts[] = {
      {"all", &all}, {"train", &split.train}, {"holdout", &split.holdout}};
  for (const auto& [name, indices] : parts) {
    if (indices->empty()) continue;
    const EvalResult r = evaluate(model, dataset, *indices);
    nlohmann::ordered_json j;
    j["kind"] = "eval";
    j["split"] = name;
    j["count"] = r.count;
    j["loss"] = r.loss;
    j["accuracy"] = r.accuracy;
    out << j.dump() << "\n";
  }
}

int cmd_eval(const RunConfig& config, const std::string& checkpoint, const std::string& data_dir,
             std::ostream& out) {
  const Dataset dataset = read_dataset(std::filesystem::path(data_dir.empty() ? config.data_dir : data_dir));
  check_labels(dataset, model_config(config));
  const Checkpoint header = read_checkpoint(checkpoint);
  const bool f64 = !header.entries.empty() && header.entries.front().dtype == DType::kF64;
  if (f64) {
    eval_typed<double>(config, checkpoint, dataset, out);
  } else {
    eval_typed<float>(config, checkpoint, dataset, out);
  }
  return kExitOk;
}

// ---- bench ----

struct BenchArgs {
  std::string modes = "global,pale_parallel";
  std::string shapes = "14x14x64,28x28x64";
  Index s_r = 7, s_c = 7;
  int heads = 2;
  int repeats = 5;
};

int cmd_bench(const BenchArgs& a, const RunConfig& config, const std::string& out_path, std::ostream& out) {
  BenchOptions options;
  for (const std::string& name : split_list(a.modes, ',')) {
    const auto mode = parse_mode(name);
    if (!mode) throw ConfigError("bench: unknown mode '" + name + "'");
    options.modes.push_back(*mode);
  }
  for (const std::string& shape : split_list(a.shapes, ',')) {
    const auto dims = split_list(shape, 'x');
    if (dims.size() != 3) throw ConfigError("bench: shape '" + shape + "' is not HxWxC");
    options.shapes.push_back(
        BenchShape{parse_index(dims[0], "height"), parse_index(dims[1], "width"), parse_index(dims[2], "channels")});
  }
  options.spec = PartitionSpec{a.s_r, a.s_c, true};
  options.heads = a.heads;
  options.repeats = a.repeats;
  options.seed = config.seed;
  options.precision = config.precision;
  const std::vector<BenchRow> rows = run_bench(options);

  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write " + out_path);
  }
  std::ostream& sink = out_path.empty() ? out : file;
  sink << kBenchHeader << "\n";
  for (const BenchRow& row : rows) sink << bench_csv_line(row) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pale-shaped attention toolkit: partitions, audits, verification, training, benchmarks", "pale"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonFlags flags;
  app.add_option("--config", flags.config, "Run configuration file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Seed for every random choice");
  app.add_option("--precision", flags.precision, "Floating-point precision")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--out", flags.out, "Output path (file or directory, per command)");
  app.add_option("--set", flags.overrides, "Override one config key: key=value (repeatable)");

  PartitionArgs partition_args;
  CLI::App* partition = app.add_subcommand("partition", "Print row/column groups and the pale token count");
  partition->add_option("height", partition_args.h, "Map height")->required();
  partition->add_option("width", partition_args.w, "Map width")->required();
  partition->add_option("s_r", partition_args.s_r, "Rows per pale")->required();
  partition->add_option("s_c", partition_args.s_c, "Columns per pale")->required();
  partition->add_option("--mode", partition_args.mode, "pale | cross | axial")
      ->check(CLI::IsMember({"pale", "cross", "axial"}));

  AuditArgs audit_args;
  CLI::App* audit = app.add_subcommand("audit", "Parameter and multiply-add audit of T / S / B");
  audit->add_option("--variant", audit_args.variant, "T | S | B | all")->check(CLI::IsMember({"T", "S", "B", "all"}));
  audit->add_option("--size", audit_args.size, "Square input extent")->check(CLI::PositiveNumber);
  audit->add_option("--pale", audit_args.pale, "Pale size for every stage (0 keeps the variant's)")
      ->check(CLI::NonNegativeNumber);
  audit->add_flag("--layers", audit_args.layers, "Also print one record per layer");

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand("verify", "Run invariant suites; exit 1 on any failure");
  verify->add_option("--suite", verify_args.suite, "partition | flops | equiv | padding | gradcheck | all")
      ->check(CLI::IsMember({"partition", "flops", "equiv", "padding", "gradcheck", "all"}));
  verify->add_option("--inject-fault", verify_args.fault, "Deliberately break the implementation")
      ->check(CLI::IsMember({"skip-mask"}));

  CLI::App* gen_data = app.add_subcommand("gen-data", "Write the synthetic oriented-grating dataset");

  std::string train_data;
  CLI::App* train_cmd = app.add_subcommand("train", "Train on a dataset directory; writes metrics and checkpoint");
  train_cmd->add_option("--data", train_data, "Dataset directory (default: data.dir)");

  std::string eval_data, eval_checkpoint;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory (default: data.dir)");

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "Time attention modes; CSV output");
  bench->add_option("--modes", bench_args.modes, "Comma-separated attention modes");
  bench->add_option("--shapes", bench_args.shapes, "Comma-separated HxWxC shapes");
  bench->add_option("--s-r", bench_args.s_r, "Rows per pale")->check(CLI::PositiveNumber);
  bench->add_option("--s-c", bench_args.s_c, "Columns per pale")->check(CLI::PositiveNumber);
  bench->add_option("--heads", bench_args.heads, "Attention heads")->check(CLI::PositiveNumber);
  bench->add_option("--repeats", bench_args.repeats, "Timed runs per row")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*partition) return cmd_partition(partition_args, out);
    if (*audit) return cmd_audit(audit_args, out);
    const RunConfig config = resolve_config(flags);
    if (*verify) return cmd_verify(verify_args, config, out);
    if (*gen_data) return cmd_gen_data(config, flags.out, out);
    if (*train_cmd) return cmd_train(config, train_data, flags.out, out);
    if (*eval_cmd) return cmd_eval(config, eval_checkpoint, eval_data, out);
    if (*bench) return cmd_bench(bench_args, config, flags.out, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace pale::harness
