#pragma once

// Binarization primitives. Training-path ops keep everything in f32
// (sign(x) materialized as +/-1.0f) with clipped straight-through
// gradients; the bit-packed XNOR-popcount path is inference-only.
//
// Conventions: sign(0) = +1; STE passes gradient where |x| <= 1 and blocks
// it elsewhere; FullBinary weights are channel_scale(w) * sign(w) with the
// scale treated as a constant in backward.

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "burnkit/common.hpp"
#include "burnkit/tensor.hpp"

namespace burnkit {

enum class BinarizeMode { None, ActivationsOnly, FullBinary };

inline const char* to_string(BinarizeMode m) {
  switch (m) {
    case BinarizeMode::None: return "none";
    case BinarizeMode::ActivationsOnly: return "activations_only";
    case BinarizeMode::FullBinary: return "full_binary";
  }
  return "?";
}

template <typename T>
inline T sign_pm1(T x) {
  return x >= T(0) ? T(1) : T(-1);
}

// sign with clipped STE: forward +/-1, backward g * 1{|x|<=1}.
template <typename T>
TensorT<T> sign_ste(const TensorT<T>& x) {
  std::vector<T> out(x.numel());
  const T* px = x.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = sign_pm1(px[i]);
  auto xn = x.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x}, [xn](detail::Node<T>& self) {
        if (!xn->on_tape) return;
        const T* g = self.grad.data();
        const T* px = xn->value.data();
        T* dx = xn->ensure_grad().data();
        for (size_t i = 0; i < self.numel(); ++i)
          if (std::abs(px[i]) <= T(1)) dx[i] += g[i];
      });
}

// Learnable-threshold binarizer: sign_ste(x - beta_c), beta broadcast over
// the channel axis. beta's gradient is -sum(upstream * STE mask) per channel.
template <typename T>
TensorT<T> rsign(const TensorT<T>& x, const TensorT<T>& beta) {
  auto geom = detail::channel_geom(x, beta.numel(), "rsign");
  std::vector<T> out(x.numel());
  const T* px = x.values().data();
  const T* pb = beta.values().data();
  for (int64_t o = 0; o < geom.outer; ++o)
    for (int64_t c = 0; c < geom.channels; ++c) {
      const T b = pb[c];
      const int64_t base = (o * geom.channels + c) * geom.inner;
      for (int64_t i = 0; i < geom.inner; ++i)
        out[static_cast<size_t>(base + i)] = sign_pm1(px[base + i] - b);
    }
  auto xn = x.node(), bn = beta.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x, beta}, [xn, bn, geom](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const T* px = xn->value.data();
        const T* pb = bn->value.data();
        T* dx = xn->on_tape ? xn->ensure_grad().data() : nullptr;
        T* db = bn->on_tape ? bn->ensure_grad().data() : nullptr;
        for (int64_t o = 0; o < geom.outer; ++o)
          for (int64_t c = 0; c < geom.channels; ++c) {
            const T b = pb[c];
            const int64_t base = (o * geom.channels + c) * geom.inner;
            double acc = 0.0;
            for (int64_t i = 0; i < geom.inner; ++i) {
              if (std::abs(px[base + i] - b) <= T(1)) {
                const T gi = g[base + i];
                if (dx) dx[base + i] += gi;
                acc += static_cast<double>(gi);
              }
            }
            if (db) db[c] -= static_cast<T>(acc);
          }
      });
}

// RPReLU: y = prelu(x - gamma_c; slope_c) + zeta_c, all three per channel.
template <typename T>
TensorT<T> rprelu(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& zeta,
                  const TensorT<T>& slope) {
  auto geom = detail::channel_geom(x, gamma.numel(), "rprelu");
  if (zeta.numel() != gamma.numel() || slope.numel() != gamma.numel())
    throw DimensionError("rprelu: per-channel parameter lengths disagree");
  std::vector<T> out(x.numel());
  const T* px = x.values().data();
  const T* pg = gamma.values().data();
  const T* pz = zeta.values().data();
  const T* ps = slope.values().data();
  for (int64_t o = 0; o < geom.outer; ++o)
    for (int64_t c = 0; c < geom.channels; ++c) {
      const T gm = pg[c], zt = pz[c], sl = ps[c];
      const int64_t base = (o * geom.channels + c) * geom.inner;
      for (int64_t i = 0; i < geom.inner; ++i) {
        const T u = px[base + i] - gm;
        out[static_cast<size_t>(base + i)] = (u > T(0) ? u : sl * u) + zt;
      }
    }
  auto xn = x.node(), gn = gamma.node(), zn = zeta.node(), sn = slope.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x, gamma, zeta, slope},
      [xn, gn, zn, sn, geom](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const T* px = xn->value.data();
        const T* pg = gn->value.data();
        const T* ps = sn->value.data();
        T* dx = xn->on_tape ? xn->ensure_grad().data() : nullptr;
        T* dgm = gn->on_tape ? gn->ensure_grad().data() : nullptr;
        T* dzt = zn->on_tape ? zn->ensure_grad().data() : nullptr;
        T* dsl = sn->on_tape ? sn->ensure_grad().data() : nullptr;
        for (int64_t o = 0; o < geom.outer; ++o)
          for (int64_t c = 0; c < geom.channels; ++c) {
            const T gm = pg[c], sl = ps[c];
            const int64_t base = (o * geom.channels + c) * geom.inner;
            double acc_g = 0.0, acc_gamma = 0.0, acc_slope = 0.0;
            for (int64_t i = 0; i < geom.inner; ++i) {
              const T u = px[base + i] - gm;
              const T gi = g[base + i];
              const T du = u > T(0) ? T(1) : sl;
              if (dx) dx[base + i] += gi * du;
              acc_gamma -= static_cast<double>(gi) * static_cast<double>(du);
              acc_g += static_cast<double>(gi);
              if (u <= T(0)) acc_slope += static_cast<double>(gi) * static_cast<double>(u);
            }
            if (dgm) dgm[c] += static_cast<T>(acc_gamma);
            if (dzt) dzt[c] += static_cast<T>(acc_g);
            if (dsl) dsl[c] += static_cast<T>(acc_slope);
          }
      });
}

// Per-output-channel mean |w| over all remaining axes: [F, ...] -> [F].
template <typename T>
TensorT<T> channel_scale(const TensorT<T>& w) {
  if (w.ndim() < 1 || w.dim(0) < 1)
    throw DimensionError("channel_scale: weight must have a leading output-channel axis");
  const int f = w.dim(0);
  const int64_t per = static_cast<int64_t>(w.numel()) / f;
  std::vector<T> out(static_cast<size_t>(f));
  const T* pw = w.values().data();
  for (int64_t i = 0; i < f; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < per; ++j) acc += std::abs(static_cast<double>(pw[i * per + j]));
    out[static_cast<size_t>(i)] = static_cast<T>(acc / static_cast<double>(per));
  }
  auto wn = w.node();
  return detail::make_op<T>(
      {f}, std::move(out), {w}, [wn, f, per](detail::Node<T>& self) {
        if (!wn->on_tape) return;
        const T* g = self.grad.data();
        const T* pw = wn->value.data();
        T* dw = wn->ensure_grad().data();
        const T inv = static_cast<T>(1.0 / static_cast<double>(per));
        for (int64_t i = 0; i < f; ++i) {
          const T gv = g[i] * inv;
          for (int64_t j = 0; j < per; ++j) {
            const T v = pw[i * per + j];
            // subgradient of |v| at 0 taken as 0
            dw[i * per + j] += v > T(0) ? gv : (v < T(0) ? -gv : T(0));
          }
        }
      });
}

// FullBinary effective weight: channel_scale(w) * sign(w). The scale is a
// detached constant in backward, so dw = g * alpha_f * 1{|w|<=1}.
template <typename T>
TensorT<T> binarize_weight(const TensorT<T>& w) {
  if (w.ndim() < 1 || w.dim(0) < 1)
    throw DimensionError("binarize_weight: weight must have a leading output-channel axis");
  const int f = w.dim(0);
  const int64_t per = static_cast<int64_t>(w.numel()) / f;
  const T* pw = w.values().data();
  std::vector<T> alpha(static_cast<size_t>(f));
  for (int64_t i = 0; i < f; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < per; ++j) acc += std::abs(static_cast<double>(pw[i * per + j]));
    alpha[static_cast<size_t>(i)] = static_cast<T>(acc / static_cast<double>(per));
  }
  std::vector<T> out(w.numel());
  for (int64_t i = 0; i < f; ++i)
    for (int64_t j = 0; j < per; ++j)
      out[static_cast<size_t>(i * per + j)] = alpha[static_cast<size_t>(i)] * sign_pm1(pw[i * per + j]);
  auto wn = w.node();
  return detail::make_op<T>(
      w.shape(), std::move(out), {w}, [wn, f, per, alpha](detail::Node<T>& self) {
        if (!wn->on_tape) return;
        const T* g = self.grad.data();
        const T* pw = wn->value.data();
        T* dw = wn->ensure_grad().data();
        for (int64_t i = 0; i < f; ++i) {
          const T a = alpha[static_cast<size_t>(i)];
          for (int64_t j = 0; j < per; ++j)
            if (std::abs(pw[i * per + j]) <= T(1)) dw[i * per + j] += g[i * per + j] * a;
        }
      });
}

// ---- bit-packed inference path ------------------------------------------

// Sign bits packed row-major, each row padded to a 64-bit boundary.
// Bit convention: +1 -> 1, -1 -> 0 (sign(0) = +1); padding bits stay zero.
struct PackedMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<uint64_t> words;       // rows * words_per_row
  std::vector<float> scale;          // optional per-output-channel factors

  int words_per_row() const { return (cols + 63) / 64; }
  const uint64_t* row(int r) const { return words.data() + static_cast<size_t>(r) * words_per_row(); }
  uint64_t* row(int r) { return words.data() + static_cast<size_t>(r) * words_per_row(); }

  bool bit(int r, int c) const {
    return (row(r)[c / 64] >> (c % 64)) & 1u;
  }
};

inline PackedMatrix pack_signs(const std::vector<float>& m, int rows, int cols) {
  if (rows < 1 || cols < 1) throw DimensionError("pack_signs: rows/cols must be positive");
  if (m.size() != static_cast<size_t>(rows) * cols)
    throw DimensionError("pack_signs: data length differs from rows*cols");
  PackedMatrix p;
  p.rows = rows;
  p.cols = cols;
  p.words.assign(static_cast<size_t>(rows) * p.words_per_row(), 0);
  for (int r = 0; r < rows; ++r) {
    uint64_t* w = p.row(r);
    for (int c = 0; c < cols; ++c)
      if (m[static_cast<size_t>(r) * cols + c] >= 0.0f) w[c / 64] |= uint64_t(1) << (c % 64);
  }
  return p;
}

inline PackedMatrix pack_signs(const Tensor& t) {
  if (t.ndim() != 2) throw DimensionError("pack_signs: tensor must be 2-D");
  return pack_signs(t.values(), t.dim(0), t.dim(1));
}

inline std::vector<float> unpack_signs(const PackedMatrix& p) {
  std::vector<float> out(static_cast<size_t>(p.rows) * p.cols);
  for (int r = 0; r < p.rows; ++r)
    for (int c = 0; c < p.cols; ++c)
      out[static_cast<size_t>(r) * p.cols + c] = p.bit(r, c) ? 1.0f : -1.0f;
  return out;
}

// Integer GEMM of two sign matrices: out(i,j) = k - 2*popcount(a_i ^ b_j)
// over the shared k axis, exactly the +/-1 dot product. b is given in
// [k,n] layout and transposed into packed rows internally.
inline std::vector<int32_t> xnor_gemm(const PackedMatrix& a, const PackedMatrix& b) {
  if (a.cols != b.rows) throw DimensionError("xnor_gemm: inner dimensions disagree");
  const int m = a.rows, k = a.cols, n = b.cols;
  // pack b^T so each output column is a contiguous bit row
  PackedMatrix bt;
  bt.rows = n;
  bt.cols = k;
  bt.words.assign(static_cast<size_t>(n) * bt.words_per_row(), 0);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < n; ++c)
      if (b.bit(r, c)) bt.row(c)[r / 64] |= uint64_t(1) << (r % 64);

  const int wpr = bt.words_per_row();
  std::vector<int32_t> out(static_cast<size_t>(m) * n);
  parallel_for(0, m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const uint64_t* arow = a.row(static_cast<int>(i));
      for (int j = 0; j < n; ++j) {
        const uint64_t* brow = bt.row(j);
        int acc = 0;
        for (int w = 0; w < wpr; ++w) acc += std::popcount(arow[w] ^ brow[w]);
        // padding bits are zero in both rows, so they xor to zero and
        // never enter the count
        out[static_cast<size_t>(i) * n + j] = k - 2 * acc;
      }
    }
  });
  return out;
}

// Wire format: rows u32, cols u32, then row-padded little-endian u64 words.
inline std::string serialize(const PackedMatrix& p) {
  std::string out;
  put_le(out, static_cast<uint32_t>(p.rows));
  put_le(out, static_cast<uint32_t>(p.cols));
  for (uint64_t w : p.words) put_le(out, w);
  return out;
}

inline PackedMatrix deserialize_packed(const std::string& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  PackedMatrix p;
  p.rows = static_cast<int>(r.u32("rows"));
  p.cols = static_cast<int>(r.u32("cols"));
  if (p.rows < 1 || p.cols < 1) throw FormatError("packed matrix: non-positive dimensions");
  const size_t nwords = static_cast<size_t>(p.rows) * p.words_per_row();
  p.words.resize(nwords);
  for (size_t i = 0; i < nwords; ++i) p.words[i] = r.u64("words");
  if (r.off != r.len) throw FormatError("packed matrix: trailing bytes");
  return p;
}

}  // namespace burnkit
