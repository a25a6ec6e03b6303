#pragma once

// Shared plumbing: error taxonomy, deterministic parallel_for, byte-order
// helpers and stable float formatting for CSV output.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace burnkit {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Shape or size disagreement between operands.
class DimensionError : public Error {
public:
  using Error::Error;
};

// Caller violated an API precondition.
class ContractError : public Error {
public:
  using Error::Error;
};

// Invalid user-facing configuration (files, flags, key=value pairs).
class ConfigError : public Error {
public:
  using Error::Error;
};

// Malformed on-disk artifact.
class FormatError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Non-finite value surfaced where training must abort.
class NumericError : public Error {
public:
  using Error::Error;
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractError(msg);
}

// Thread cap: min(hardware, BURNKIT_THREADS). Read once per process.
inline int max_threads() {
  static const int cap = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("BURNKIT_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1 && v < 1024) hw = std::min<long>(hw, v);
    }
    return hw;
  }();
  return cap;
}

// Splits [begin, end) into contiguous chunks, one per worker. Callers must
// only write disjoint outputs per index so results never depend on the
// thread count.
inline void parallel_for(int64_t begin, int64_t end,
                         const std::function<void(int64_t, int64_t)>& body) {
  const int64_t n = end - begin;
  if (n <= 0) return;
  int threads = max_threads();
  if (threads > n) threads = static_cast<int>(n);
  if (threads <= 1 || n < 2) {
    body(begin, end);
    return;
  }
  const int64_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    const int64_t lo = begin + t * chunk;
    const int64_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

// --- little-endian encode/decode ---------------------------------------

inline void put_le(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_le(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_le(out, bits);
}

struct ByteReader {
  const uint8_t* p;
  size_t len;
  size_t off = 0;

  ByteReader(const void* data, size_t n) : p(static_cast<const uint8_t*>(data)), len(n) {}

  void need(size_t n, const char* what) const {
    if (off + n > len) {
      throw FormatError(std::string("truncated input at byte ") + std::to_string(off) +
                        ": expected " + std::to_string(n) + " more bytes for " + what);
    }
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return p[off++];
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = static_cast<uint16_t>(p[off]) | static_cast<uint16_t>(p[off + 1]) << 8;
    off += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[off + i]) << (8 * i);
    off += 8;
    return v;
  }
  float f32(const char* what) {
    uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(p + off), n);
    off += n;
    return s;
  }
};

// Deterministic float -> text for CSV artifacts (round-trips f32 exactly).
inline std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// FNV-1a over raw bytes; used for parameter/telemetry fingerprints.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace burnkit
