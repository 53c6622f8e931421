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

#include "pale/flop_trace.hpp"

#include <stdexcept>

namespace pale {

namespace {
thread_local FlopTrace* t_active = nullptr;
thread_local std::vector<std::string> t_labels;

std::string joined_label() {
  std::string out;
  for (const auto& s : t_labels) {
    if (!out.empty()) out += '/';
    out += s;
  }
  return out;
}
}  // namespace

std::string_view op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConv: return "conv";
    case OpKind::kAttention: return "attention";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kNorm: return "norm";
    case OpKind::kElementwise: return "elementwise";
    case OpKind::kCount_: break;
  }
  return "unknown";
}

std::int64_t OpCounts::multiply_adds() const {
  return (*this)[OpKind::kMatmul] + (*this)[OpKind::kConv] + (*this)[OpKind::kAttention];
}

OpCounts& OpCounts::operator+=(const OpCounts& other) {
  for (std::size_t i = 0; i < kOpKindCount; ++i) by_kind[i] += other.by_kind[i];
  return *this;
}

void FlopTrace::add(std::string_view label, OpKind kind, std::int64_t count) {
  if (count < 0) throw std::invalid_argument("FlopTrace::add: negative count");
  auto it = scopes_.find(label);
  if (it == scopes_.end()) it = scopes_.emplace(std::string(label), OpCounts{}).first;
  it->second[kind] += count;
}

OpCounts FlopTrace::scope(std::string_view label) const {
  auto it = scopes_.find(label);
  return it == scopes_.end() ? OpCounts{} : it->second;
}

OpCounts FlopTrace::total() const {
  OpCounts out;
  for (const auto& [_, c] : scopes_) out += c;
  return out;
}

OpCounts FlopTrace::matching(std::string_view label) const {
  OpCounts out;
  for (const auto& [name, c] : scopes_) {
    const bool exact = name == label;
    const bool suffix = name.size() > label.size() && name.ends_with(label) &&
                        name[name.size() - label.size() - 1] == '/';
    if (exact || suffix) out += c;
  }
  return out;
}

OpCounts FlopTrace::under(std::string_view prefix) const {
  OpCounts out;
  for (const auto& [name, c] : scopes_) {
    const bool nested = name.size() > prefix.size() && name.starts_with(prefix) && name[prefix.size()] == '/';
    if (name == prefix || nested) out += c;
  }
  return out;
}

FlopTrace& FlopTrace::operator+=(const FlopTrace& other) {
  for (const auto& [name, c] : other.scopes_) scopes_[name] += c;
  return *this;
}

TraceScope::TraceScope(FlopTrace& trace) : previous_(t_active), saved_labels_(std::move(t_labels)) {
  t_labels.clear();
  t_active = &trace;
}

TraceScope::~TraceScope() {
  t_active = previous_;
  t_labels = std::move(saved_labels_);
}

TraceLabel::TraceLabel(std::string_view segment) { t_labels.emplace_back(segment); }

TraceLabel::~TraceLabel() { t_labels.pop_back(); }

namespace detail {
void record(OpKind kind, std::int64_t count) {
  if (t_active == nullptr) return;
  t_active->add(joined_label(), kind, count);
}
}  // namespace detail

}  // namespace pale
