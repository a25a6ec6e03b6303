#pragma once

// BNCK checkpoint container: a versioned, ordered named-tensor map with a
// stage tag, iteration counter and RNG seed. Layout (little-endian):
//   magic "BNCK", version u32, stage u8 (0 none / 1 stage1 / 2 stage2),
//   iteration u64, seed u64, tensor count u32, then per tensor:
//   name length u16 + UTF-8 name, ndim u8, dims u32[], f32 data.

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "burnkit/common.hpp"

namespace burnkit {

struct CheckpointTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<float> data;
};

struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  uint32_t version = kVersion;
  uint8_t stage = 0;
  uint64_t iteration = 0;
  uint64_t seed = 0;
  std::vector<CheckpointTensor> tensors;  // serialization order preserved

  void add(std::string name, std::vector<int> dims, std::vector<float> data) {
    size_t n = 1;
    for (int d : dims) n *= static_cast<size_t>(d);
    if (n != data.size()) throw DimensionError("checkpoint tensor '" + name + "': dims/data mismatch");
    tensors.push_back({std::move(name), std::move(dims), std::move(data)});
  }

  const CheckpointTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline std::string serialize(const Checkpoint& ckpt) {
  std::string out;
  out += "BNCK";
  put_le(out, ckpt.version);
  out.push_back(static_cast<char>(ckpt.stage));
  put_le(out, ckpt.iteration);
  put_le(out, ckpt.seed);
  put_le(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xffff) throw ContractError("checkpoint tensor name too long");
    put_le(out, static_cast<uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(t.dims.size()));
    for (int d : t.dims) put_le(out, static_cast<uint32_t>(d));
    for (float v : t.data) put_le(out, v);
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  if (r.bytes(4, "magic") != "BNCK") throw FormatError("checkpoint: bad magic, expected BNCK");
  Checkpoint ckpt;
  ckpt.version = r.u32("version");
  if (ckpt.version != Checkpoint::kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(ckpt.version));
  ckpt.stage = r.u8("stage");
  if (ckpt.stage > 2) throw FormatError("checkpoint: invalid stage tag");
  ckpt.iteration = r.u64("iteration");
  ckpt.seed = r.u64("seed");
  const uint32_t count = r.u32("tensor count");
  ckpt.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const uint16_t name_len = r.u16("name length");
    t.name = r.bytes(name_len, "name");
    const uint8_t ndim = r.u8("ndim");
    size_t numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      uint32_t dim = r.u32("dim");
      if (dim == 0) throw FormatError("checkpoint tensor '" + t.name + "': zero dimension");
      t.dims.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    t.data.resize(numel);
    for (size_t j = 0; j < numel; ++j) t.data[j] = r.f32("tensor data");
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.off != r.len) throw FormatError("checkpoint: trailing bytes after last tensor");
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string bytes = serialize(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

inline uint64_t checkpoint_hash(const Checkpoint& ckpt) {
  std::string bytes = serialize(ckpt);
  return fnv1a(bytes.data(), bytes.size());
}

}  // namespace burnkit
