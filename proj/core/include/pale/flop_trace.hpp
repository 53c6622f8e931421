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

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pale {

/// Kinds of work recorded by forward passes. Counts are multiply-adds for
/// matmul/conv/attention; the remaining kinds count elementwise operations
/// and are kept apart from the closed-form comparisons.
enum class OpKind : int {
  kMatmul = 0,
  kConv,
  kAttention,
  kSoftmax,
  kNorm,
  kElementwise,
  kCount_
};

inline constexpr std::size_t kOpKindCount = static_cast<std::size_t>(OpKind::kCount_);

std::string_view op_kind_name(OpKind kind);

struct OpCounts {
  std::array<std::int64_t, kOpKindCount> by_kind{};

  std::int64_t& operator[](OpKind k) { return by_kind[static_cast<std::size_t>(k)]; }
  std::int64_t operator[](OpKind k) const { return by_kind[static_cast<std::size_t>(k)]; }
  /// matmul + conv + attention multiply-adds.
  std::int64_t multiply_adds() const;
  OpCounts& operator+=(const OpCounts& other);
  bool operator==(const OpCounts&) const = default;
};

/// Multiply-add accumulator keyed by scope label ("qkv", "row", ...).
/// Unlabelled work lands under the empty label.
class FlopTrace {
 public:
  void add(std::string_view label, OpKind kind, std::int64_t count);

  const std::map<std::string, OpCounts, std::less<>>& scopes() const { return scopes_; }
  OpCounts scope(std::string_view label) const;
  OpCounts total() const;

  /// Sums every scope whose label equals `label` or ends with "/" + label.
  OpCounts matching(std::string_view label) const;

  /// Sums every scope equal to `prefix` or nested below it ("prefix/...").
  OpCounts under(std::string_view prefix) const;

  FlopTrace& operator+=(const FlopTrace& other);

 private:
  std::map<std::string, OpCounts, std::less<>> scopes_;
};

/// Routes all forward-pass recordings on this thread into `trace` while alive.
/// Scopes nest; the innermost one wins.
class TraceScope {
 public:
  explicit TraceScope(FlopTrace& trace);
  ~TraceScope();
  TraceScope(const TraceScope&) = delete;
  TraceScope& operator=(const TraceScope&) = delete;

 private:
  FlopTrace* previous_;
  std::vector<std::string> saved_labels_;
};

/// Pushes a label segment; recordings use the "/"-joined path of live labels.
class TraceLabel {
 public:
  explicit TraceLabel(std::string_view segment);
  ~TraceLabel();
  TraceLabel(const TraceLabel&) = delete;
  TraceLabel& operator=(const TraceLabel&) = delete;
};

namespace detail {
/// No-op unless a TraceScope is active on this thread.
void record(OpKind kind, std::int64_t count);
}  // namespace detail

}  // namespace pale
