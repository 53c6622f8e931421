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

#include "pale/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace pale::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config: '" + std::string(key) + "' expects an integer, got '" + std::string(value) + "'");
  }
  return out;
}

Index parse_nonneg(std::string_view key, std::string_view value) {
  const Index v = parse_int<Index>(key, value);
  if (v < 0) throw ConfigError("config: '" + std::string(key) + "' must be >= 0");
  return v;
}

Index parse_positive(std::string_view key, std::string_view value) {
  const Index v = parse_int<Index>(key, value);
  if (v < 1) throw ConfigError("config: '" + std::string(key) + "' must be >= 1");
  return v;
}

double parse_double(std::string_view key, std::string_view value) {
  std::string text(value);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) {
    throw ConfigError("config: '" + std::string(key) + "' expects a number, got '" + text + "'");
  }
  return v;
}

std::vector<Index> parse_list(std::string_view key, std::string_view value) {
  std::vector<Index> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const auto item = trim(value.substr(start, comma == std::string_view::npos ? value.npos : comma - start));
    out.push_back(parse_positive(key, item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (out.size() != kStageCount) {
    throw ConfigError("config: '" + std::string(key) + "' needs " + std::to_string(kStageCount) + " values");
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> t;
    auto index_field = [&](const char* key, Index RunConfig::*member, bool positive) {
      t[key] = Field{[member, positive](RunConfig& c, std::string_view k, std::string_view v) {
                       c.*member = positive ? parse_positive(k, v) : parse_nonneg(k, v);
                     },
                     [member](const RunConfig& c) { return std::to_string(c.*member); }};
    };
    auto list_field = [&](const char* key, std::string RunConfig::*member) {
      t[key] = Field{[member](RunConfig& c, std::string_view k, std::string_view v) {
                       if (v.empty()) {
                         (c.*member).clear();
                         return;
                       }
                       const auto items = parse_list(k, v);
                       std::string canonical;
                       for (std::size_t i = 0; i < items.size(); ++i) {
                         canonical += (i ? "," : "") + std::to_string(items[i]);
                       }
                       c.*member = canonical;
                     },
                     [member](const RunConfig& c) { return c.*member; }};
    };
    t["model.variant"] = Field{[](RunConfig& c, std::string_view, std::string_view v) {
                                 try {
                                   c.model_variant = variant_config(v).name;
                                 } catch (const ShapeError& e) {
                                   throw ConfigError(std::string("config: ") + e.what());
                                 }
                               },
                               [](const RunConfig& c) { return c.model_variant; }};
    index_field("model.classes", &RunConfig::model_classes, true);
    list_field("model.channels", &RunConfig::model_channels);
    list_field("model.heads", &RunConfig::model_heads);
    list_field("model.depths", &RunConfig::model_depths);
    t["attn.mode"] = Field{[](RunConfig& c, std::string_view, std::string_view v) {
                             const auto mode = parse_mode(v);
                             if (!mode) throw ConfigError("config: unknown attention mode '" + std::string(v) + "'");
                             c.attn_mode = *mode;
                           },
                           [](const RunConfig& c) { return std::string(mode_name(c.attn_mode)); }};
    index_field("pale.s_r", &RunConfig::pale_s_r, false);
    index_field("pale.s_c", &RunConfig::pale_s_c, false);
    t["data.dir"] = Field{[](RunConfig& c, std::string_view, std::string_view v) { c.data_dir = std::string(v); },
                          [](const RunConfig& c) { return c.data_dir; }};
    index_field("data.classes", &RunConfig::data_classes, true);
    index_field("data.per_class", &RunConfig::data_per_class, true);
    index_field("data.size", &RunConfig::data_size, true);
    index_field("train.steps", &RunConfig::train_steps, false);
    index_field("train.batch", &RunConfig::train_batch, true);
    t["train.lr"] = Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                            const double lr = parse_double(k, v);
                            if (!(lr > 0.0)) throw ConfigError("config: 'train.lr' must be > 0");
                            c.train_lr = lr;
                          },
                          [](const RunConfig& c) { return format_double(c.train_lr); }};
    index_field("train.log_every", &RunConfig::train_log_every, true);
    index_field("train.holdout_every", &RunConfig::train_holdout_every, false);
    t["seed"] = Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                        c.seed = parse_int<std::uint64_t>(k, v);
                      },
                      [](const RunConfig& c) { return std::to_string(c.seed); }};
    t["precision"] = Field{[](RunConfig& c, std::string_view, std::string_view v) { c.precision = parse_precision(v); },
                           [](const RunConfig& c) { return std::string(precision_name(c.precision)); }};
    return t;
  }();
  return table;
}

}  // namespace

std::string_view precision_name(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision parse_precision(std::string_view text) {
  if (text == "f32") return Precision::kF32;
  if (text == "f64") return Precision::kF64;
  throw ConfigError("precision must be f32 or f64, got '" + std::string(text) + "'");
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("config: unknown key '" + std::string(key) + "'");
  it->second.set(config, key, value);
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    }
    set_config_value(config, key, value);
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string print_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

VariantConfig model_config(const RunConfig& config) {
  VariantConfig v = variant_config(config.model_variant, config.model_classes);
  v.mode = config.attn_mode;
  auto apply = [&](const std::string& text, auto setter) {
    if (text.empty()) return;
    const auto items = parse_list("model", text);
    for (std::size_t i = 0; i < kStageCount; ++i) setter(v.stages[i], items[i]);
  };
  apply(config.model_channels, [](StageConfig& s, Index x) { s.channels = x; });
  apply(config.model_heads, [](StageConfig& s, Index x) { s.heads = static_cast<int>(x); });
  apply(config.model_depths, [](StageConfig& s, Index x) { s.depth = static_cast<int>(x); });
  for (auto& s : v.stages) {
    if (config.pale_s_r > 0) s.pale_rows = config.pale_s_r;
    if (config.pale_s_c > 0) s.pale_cols = config.pale_s_c;
  }
  try {
    v.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return v;
}

}  // namespace pale::harness
