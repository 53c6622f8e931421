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

#include "pale/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

namespace pale {

namespace {

constexpr char kMagic[4] = {'P', 'A', 'L', 'E'};

template <typename U>
void put_le(std::vector<std::byte>& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::byte>& bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<U>(std::to_integer<std::uint8_t>(bytes_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(U);
    return value;
  }

  void read(void* dst, std::size_t n, const char* what) {
    need(n, what);
    if (n) std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }

  const std::vector<std::byte>& bytes_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
  }
  throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(d)));
}

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) {
    return DType::kF32;
  } else {
    static_assert(std::is_same_v<T, double>);
    return DType::kF64;
  }
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

}  // namespace

template <typename T>
Tensor<T> CheckpointEntry::to_tensor() const {
  if (dtype != dtype_of<T>()) throw FormatError("tensor '" + name + "' has a different dtype");
  Tensor<T> out(shape);
  if (payload.size() != static_cast<std::size_t>(out.numel()) * sizeof(T)) {
    throw FormatError("tensor '" + name + "' payload size mismatch");
  }
  for (Index i = 0; i < out.numel(); ++i) {
    Bits<T> bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      bits |= static_cast<Bits<T>>(std::to_integer<std::uint8_t>(payload[static_cast<std::size_t>(i) * sizeof(T) + b]))
              << (8 * b);
    }
    out[i] = std::bit_cast<T>(bits);
  }
  return out;
}

template <typename T>
CheckpointEntry CheckpointEntry::from_tensor(std::string name, const Tensor<T>& tensor) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.dtype = dtype_of<T>();
  e.shape = tensor.shape();
  e.payload.reserve(static_cast<std::size_t>(tensor.numel()) * sizeof(T));
  for (Index i = 0; i < tensor.numel(); ++i) put_le(e.payload, std::bit_cast<Bits<T>>(tensor[i]));
  return e;
}

Index Checkpoint::value_count() const {
  Index n = 0;
  for (const auto& e : entries) n += e.numel();
  return n;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& checkpoint) {
  std::vector<std::byte> out;
  for (char ch : kMagic) out.push_back(static_cast<std::byte>(ch));
  put_le(out, checkpoint.version);
  put_le(out, static_cast<std::uint32_t>(checkpoint.entries.size()));
  for (const auto& e : checkpoint.entries) {
    if (e.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + e.name);
    if (e.shape.size() > 255) throw FormatError("tensor rank too large: " + e.name);
    if (e.payload.size() != static_cast<std::size_t>(e.numel()) * dtype_size(e.dtype)) {
      throw FormatError("tensor '" + e.name + "' payload does not match its shape");
    }
    put_le(out, static_cast<std::uint16_t>(e.name.size()));
    for (char ch : e.name) out.push_back(static_cast<std::byte>(ch));
    put_le(out, static_cast<std::uint8_t>(e.dtype));
    put_le(out, static_cast<std::uint8_t>(e.shape.size()));
    for (Index d : e.shape) put_le(out, static_cast<std::uint64_t>(d));
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::byte>& bytes) {
  Reader in(bytes);
  char magic[4];
  in.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic bytes");
  Checkpoint ck;
  ck.version = in.get<std::uint32_t>("version");
  if (ck.version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(ck.version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = in.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    CheckpointEntry e;
    const auto name_len = in.get<std::uint16_t>("name length");
    e.name.resize(name_len);
    in.read(e.name.data(), name_len, "name");
    const auto code = in.get<std::uint8_t>("dtype");
    if (code > 1) throw FormatError("tensor '" + e.name + "' has unknown dtype code " + std::to_string(code));
    e.dtype = static_cast<DType>(code);
    const auto rank = in.get<std::uint8_t>("rank");
    Index count_values = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto extent = in.get<std::uint64_t>("extent");
      if (extent > (std::uint64_t{1} << 40)) throw FormatError("tensor '" + e.name + "' has an absurd extent");
      e.shape.push_back(static_cast<Index>(extent));
      count_values *= static_cast<Index>(extent);
    }
    const std::size_t bytes_needed = static_cast<std::size_t>(count_values) * dtype_size(e.dtype);
    e.payload.resize(bytes_needed);
    in.read(e.payload.data(), bytes_needed, "payload");
    ck.entries.push_back(std::move(e));
  }
  if (!in.done()) throw FormatError("trailing bytes after the last tensor");
  return ck;
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  if (!raw.empty()) std::memcpy(bytes.data(), raw.data(), raw.size());
  return decode_checkpoint(bytes);
}

template <typename T>
Checkpoint checkpoint_from_model(const Model<T>& model) {
  Checkpoint ck;
  for (const auto& [name, p] : model.named_parameters()) ck.entries.push_back(CheckpointEntry::from_tensor(name, p.value()));
  return ck;
}

template <typename T>
void load_into(Model<T>& model, const Checkpoint& checkpoint) {
  auto params = model.named_parameters();
  if (params.size() != checkpoint.entries.size()) {
    throw FormatError("checkpoint holds " + std::to_string(checkpoint.entries.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  std::vector<Tensor<T>> staged;
  staged.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = checkpoint.entries[i];
    if (e.name != params[i].first) throw FormatError("expected tensor '" + params[i].first + "', found '" + e.name + "'");
    if (e.shape != params[i].second.shape()) {
      throw FormatError("tensor '" + e.name + "' has shape " + shape_to_string(e.shape) + ", model expects " +
                        shape_to_string(params[i].second.shape()));
    }
    staged.push_back(e.template to_tensor<T>());
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].second.mutable_value() = std::move(staged[i]);
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  write_checkpoint(checkpoint_from_model(model), path);
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, const VariantConfig& config) {
  const Checkpoint ck = read_checkpoint(path);
  Model<T> model = Model<T>::create(config, 0);
  load_into(model, ck);
  return model;
}

template Tensor<float> CheckpointEntry::to_tensor<float>() const;
template Tensor<double> CheckpointEntry::to_tensor<double>() const;
template CheckpointEntry CheckpointEntry::from_tensor<float>(std::string, const Tensor<float>&);
template CheckpointEntry CheckpointEntry::from_tensor<double>(std::string, const Tensor<double>&);
template Checkpoint checkpoint_from_model(const Model<float>&);
template Checkpoint checkpoint_from_model(const Model<double>&);
template void load_into(Model<float>&, const Checkpoint&);
template void load_into(Model<double>&, const Checkpoint&);
template void save_checkpoint(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint(const std::filesystem::path&, const VariantConfig&);
template Model<double> load_checkpoint(const std::filesystem::path&, const VariantConfig&);

}  // namespace pale
