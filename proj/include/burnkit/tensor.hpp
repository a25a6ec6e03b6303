#pragma once

// Dense row-major tensors (NCHW for images) with tape-based reverse-mode
// autodiff. Every op records a closure that scatters upstream gradients to
// its parents; backward() walks the recorded graph once in reverse
// topological order. First-order only, f32 in production (the scalar type
// is a template parameter so tests can instantiate the identical graph in
// f64 for finite-difference oracles). Reductions accumulate in f64.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "burnkit/common.hpp"
#include "burnkit/rng.hpp"

namespace burnkit {

inline thread_local int g_no_grad_depth = 0;
inline bool grad_enabled() { return g_no_grad_depth == 0; }

// Scoped inference mode: ops built under the guard record no tape.
struct NoGradGuard {
  NoGradGuard() { ++g_no_grad_depth; }
  ~NoGradGuard() { --g_no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

template <typename T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;         // sized lazily, persists across backward calls
  bool requires_grad = false;  // leaf opt-in
  bool on_tape = false;        // participates in backward
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backprop;

  size_t numel() const { return value.size(); }
  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

}  // namespace detail

template <typename T>
class TensorT {
public:
  using Scalar = T;

  TensorT() = default;

  static TensorT zeros(std::vector<int> shape) { return full(std::move(shape), T(0)); }

  static TensorT full(std::vector<int> shape, T fill) {
    TensorT t;
    t.node_ = std::make_shared<detail::Node<T>>();
    size_t n = detail::shape_numel(shape);
    t.node_->shape = std::move(shape);
    t.node_->value.assign(n, fill);
    return t;
  }

  static TensorT from(std::vector<int> shape, std::vector<T> data) {
    if (detail::shape_numel(shape) != data.size())
      throw DimensionError("tensor data length does not match shape");
    TensorT t;
    t.node_ = std::make_shared<detail::Node<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }

  static TensorT scalar(T v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  size_t numel() const { return node_->numel(); }

  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  T item() const {
    if (numel() != 1) throw ContractError("item() requires a single-element tensor");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  TensorT& set_requires_grad(bool b) {
    node_->requires_grad = b;
    node_->on_tape = b || !node_->parents.empty();
    return *this;
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::vector<T>& grad() { return node_->ensure_grad(); }
  const std::vector<T>& grad_view() const {
    if (!has_grad()) throw ContractError("gradient not populated; call backward first");
    return node_->grad;
  }
  // Allocates the grad buffer if needed; a zeroed buffer marks the tensor
  // as ready for accumulation, so groups a loss never reaches report norm 0.
  void zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  // Value copy detached from the tape.
  TensorT detached() const {
    TensorT t;
    t.node_ = std::make_shared<detail::Node<T>>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    return t;
  }

  std::shared_ptr<detail::Node<T>> node() const { return node_; }

private:
  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = TensorT<float>;

// Parameter: a named leaf plus its optimizer/telemetry group.
enum class ParamGroup { FpClassifier, BinaryExtractor, BinaryClassifier, Frozen };

inline const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::FpClassifier: return "fp_classifier";
    case ParamGroup::BinaryExtractor: return "bin_extractor";
    case ParamGroup::BinaryClassifier: return "bin_classifier";
    case ParamGroup::Frozen: return "frozen";
  }
  return "?";
}

template <typename T>
struct ParameterT {
  std::string name;  // dot-separated path, unique within a network
  TensorT<T> tensor;
  ParamGroup group = ParamGroup::Frozen;
};

using Parameter = ParameterT<float>;

namespace detail {

template <typename T>
TensorT<T> make_op(std::vector<int> shape, std::vector<T> value,
                   std::vector<TensorT<T>> parents,
                   std::function<void(Node<T>&)> backprop) {
  TensorT<T> out = TensorT<T>::from(std::move(shape), std::move(value));
  bool tape = false;
  if (grad_enabled()) {
    for (const auto& p : parents) tape = tape || p.node()->on_tape;
  }
  if (tape) {
    auto n = out.node();
    n->on_tape = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return out;
}

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": operand shapes differ");
}

}  // namespace detail

// ---- backward ----------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Interior (op-output) gradients are
// scratch state reset on every sweep; only leaf gradients persist, so
// repeated backward calls without zero_grad accumulate into the leaves.
template <typename T>
void backward(const TensorT<T>& loss) {
  if (loss.numel() != 1) throw ContractError("backward requires a scalar loss");
  auto root = loss.node();
  if (!root->on_tape)
    throw ContractError("backward on an empty tape: no tensor requires grad");

  // Iterative post-order DFS.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  struct Frame {
    detail::Node<T>* n;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      detail::Node<T>* p = f.n->parents[f.next_parent++].get();
      if (p->on_tape && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  for (detail::Node<T>* n : order) {
    if (n->backprop) {  // interior node
      n->ensure_grad();
      std::fill(n->grad.begin(), n->grad.end(), T(0));
    }
  }

  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---- elementwise -------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        const T* g = self.grad.data();
        if (an->on_tape) {
          T* da = an->ensure_grad().data();
          for (size_t i = 0; i < self.numel(); ++i) da[i] += g[i];
        }
        if (bn->on_tape) {
          T* db = bn->ensure_grad().data();
          for (size_t i = 0; i < self.numel(); ++i) db[i] += g[i];
        }
      });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        const T* g = self.grad.data();
        if (an->on_tape) {
          T* da = an->ensure_grad().data();
          for (size_t i = 0; i < self.numel(); ++i) da[i] += g[i];
        }
        if (bn->on_tape) {
          T* db = bn->ensure_grad().data();
          for (size_t i = 0; i < self.numel(); ++i) db[i] -= g[i];
        }
      });
}

// Hadamard product.
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        const T* g = self.grad.data();
        if (an->on_tape) {
          T* da = an->ensure_grad().data();
          const T* pb = bn->value.data();
          for (size_t i = 0; i < self.numel(); ++i) da[i] += g[i] * pb[i];
        }
        if (bn->on_tape) {
          T* db = bn->ensure_grad().data();
          const T* pa = an->value.data();
          for (size_t i = 0; i < self.numel(); ++i) db[i] += g[i] * pa[i];
        }
      });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
  std::vector<T> out(a.numel());
  const T* pa = a.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * c;
  auto an = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a}, [an, c](detail::Node<T>& self) {
        if (!an->on_tape) return;
        const T* g = self.grad.data();
        T* da = an->ensure_grad().data();
        for (size_t i = 0; i < self.numel(); ++i) da[i] += g[i] * c;
      });
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T c) {
  std::vector<T> out(a.numel());
  const T* pa = a.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + c;
  auto an = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->on_tape) return;
        const T* g = self.grad.data();
        T* da = an->ensure_grad().data();
        for (size_t i = 0; i < self.numel(); ++i) da[i] += g[i];
      });
}

// Natural log, elementwise. Domain errors propagate as NaN/Inf per IEEE;
// callers add their own floors (the KL path uses 1e-12).
template <typename T>
TensorT<T> log(const TensorT<T>& a) {
  std::vector<T> out(a.numel());
  const T* pa = a.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(pa[i]);
  auto an = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->on_tape) return;
        const T* g = self.grad.data();
        const T* pa = an->value.data();
        T* da = an->ensure_grad().data();
        for (size_t i = 0; i < self.numel(); ++i) da[i] += g[i] / pa[i];
      });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  std::vector<T> out(a.numel());
  const T* pa = a.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] > T(0) ? pa[i] : T(0);
  auto an = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->on_tape) return;
        const T* g = self.grad.data();
        const T* pa = an->value.data();
        T* da = an->ensure_grad().data();
        for (size_t i = 0; i < self.numel(); ++i)
          if (pa[i] > T(0)) da[i] += g[i];
      });
}

namespace detail {
// (batch-outer, C, inner) view of an NCHW or [B,C] tensor with the channel
// axis at dim 1.
struct ChannelGeom {
  int64_t outer, channels, inner;
};
template <typename T>
ChannelGeom channel_geom(const TensorT<T>& x, size_t param_len, const char* op) {
  if (x.ndim() < 2) throw DimensionError(std::string(op) + ": input must have a channel axis");
  ChannelGeom g;
  g.outer = x.dim(0);
  g.channels = x.dim(1);
  g.inner = 1;
  for (int i = 2; i < x.ndim(); ++i) g.inner *= x.dim(i);
  if (static_cast<size_t>(g.channels) != param_len)
    throw DimensionError(std::string(op) + ": per-channel parameter length differs from channel count");
  return g;
}
}  // namespace detail

// Channel-wise PReLU: y = x if x > 0 else slope_c * x.
template <typename T>
TensorT<T> prelu(const TensorT<T>& x, const TensorT<T>& slope) {
  auto geom = detail::channel_geom(x, slope.numel(), "prelu");
  std::vector<T> out(x.numel());
  const T* px = x.values().data();
  const T* ps = slope.values().data();
  for (int64_t o = 0; o < geom.outer; ++o)
    for (int64_t c = 0; c < geom.channels; ++c) {
      const T s = ps[c];
      const int64_t base = (o * geom.channels + c) * geom.inner;
      for (int64_t i = 0; i < geom.inner; ++i) {
        const T v = px[base + i];
        out[static_cast<size_t>(base + i)] = v > T(0) ? v : s * v;
      }
    }
  auto xn = x.node(), sn = slope.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x, slope}, [xn, sn, geom](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const T* px = xn->value.data();
        const T* ps = sn->value.data();
        T* dx = xn->on_tape ? xn->ensure_grad().data() : nullptr;
        T* ds = sn->on_tape ? sn->ensure_grad().data() : nullptr;
        for (int64_t o = 0; o < geom.outer; ++o)
          for (int64_t c = 0; c < geom.channels; ++c) {
            const int64_t base = (o * geom.channels + c) * geom.inner;
            double acc = 0.0;
            for (int64_t i = 0; i < geom.inner; ++i) {
              const T v = px[base + i];
              const T gi = g[base + i];
              if (v > T(0)) {
                if (dx) dx[base + i] += gi;
              } else {
                if (dx) dx[base + i] += gi * ps[c];
                acc += static_cast<double>(gi) * static_cast<double>(v);
              }
            }
            if (ds) ds[c] += static_cast<T>(acc);
          }
      });
}

// ---- reductions ----------------------------------------------------------

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
  double acc = 0.0;
  for (T v : a.values()) acc += static_cast<double>(v);
  auto an = a.node();
  return detail::make_op<T>(
      {1}, {static_cast<T>(acc)}, {a}, [an](detail::Node<T>& self) {
        if (!an->on_tape) return;
        const T g = self.grad[0];
        T* da = an->ensure_grad().data();
        for (size_t i = 0; i < an->numel(); ++i) da[i] += g;
      });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a) {
  double acc = 0.0;
  for (T v : a.values()) acc += static_cast<double>(v);
  const T inv = static_cast<T>(1.0 / static_cast<double>(a.numel()));
  auto an = a.node();
  return detail::make_op<T>(
      {1}, {static_cast<T>(acc / static_cast<double>(a.numel()))}, {a},
      [an, inv](detail::Node<T>& self) {
        if (!an->on_tape) return;
        const T g = self.grad[0] * inv;
        T* da = an->ensure_grad().data();
        for (size_t i = 0; i < an->numel(); ++i) da[i] += g;
      });
}

template <typename T>
TensorT<T> dot(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "dot");
  double acc = 0.0;
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (size_t i = 0; i < a.numel(); ++i)
    acc += static_cast<double>(pa[i]) * static_cast<double>(pb[i]);
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      {1}, {static_cast<T>(acc)}, {a, b}, [an, bn](detail::Node<T>& self) {
        const T g = self.grad[0];
        if (an->on_tape) {
          T* da = an->ensure_grad().data();
          const T* pb = bn->value.data();
          for (size_t i = 0; i < an->numel(); ++i) da[i] += g * pb[i];
        }
        if (bn->on_tape) {
          T* db = bn->ensure_grad().data();
          const T* pa = an->value.data();
          for (size_t i = 0; i < bn->numel(); ++i) db[i] += g * pa[i];
        }
      });
}

template <typename T>
TensorT<T> l2_norm(const TensorT<T>& a) {
  double acc = 0.0;
  for (T v : a.values()) acc += static_cast<double>(v) * static_cast<double>(v);
  const T norm = static_cast<T>(std::sqrt(acc));
  auto an = a.node();
  return detail::make_op<T>(
      {1}, {norm}, {a}, [an, norm](detail::Node<T>& self) {
        if (!an->on_tape) return;
        const T denom = std::max(norm, static_cast<T>(1e-12));
        const T g = self.grad[0] / denom;
        const T* pa = an->value.data();
        T* da = an->ensure_grad().data();
        for (size_t i = 0; i < an->numel(); ++i) da[i] += g * pa[i];
      });
}

// ---- linear algebra ------------------------------------------------------

// [m,k] x [k,n] -> [m,n]; dA = dC.B^T, dB = A^T.dC.
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul: operands must be 2-D");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) throw DimensionError("matmul: inner dimensions disagree");
  std::vector<T> out(static_cast<size_t>(m) * n, T(0));
  {
    const T* pa = a.values().data();
    const T* pb = b.values().data();
    T* po = out.data();
    parallel_for(0, m, [&](int64_t lo, int64_t hi) {
      for (int64_t i = lo; i < hi; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
          const T av = pa[i * k + kk];
          const T* brow = pb + kk * n;
          T* orow = po + i * n;
          for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    });
  }
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::Node<T>& self) {
        const T* g = self.grad.data();
        if (an->on_tape) {
          T* da = an->ensure_grad().data();
          const T* pb = bn->value.data();
          parallel_for(0, m, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i)
              for (int64_t kk = 0; kk < k; ++kk) {
                double acc = 0.0;
                const T* grow = g + i * n;
                const T* brow = pb + kk * n;
                for (int64_t j = 0; j < n; ++j)
                  acc += static_cast<double>(grow[j]) * static_cast<double>(brow[j]);
                da[i * k + kk] += static_cast<T>(acc);
              }
          });
        }
        if (bn->on_tape) {
          T* db = bn->ensure_grad().data();
          const T* pa = an->value.data();
          parallel_for(0, k, [&](int64_t lo, int64_t hi) {
            for (int64_t kk = lo; kk < hi; ++kk)
              for (int64_t i = 0; i < m; ++i) {
                const T av = pa[i * k + kk];
                const T* grow = g + i * n;
                T* brow = db + kk * n;
                for (int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
              }
          });
        }
      });
}

// Fully connected layer: x[B,in] . w[out,in]^T + bias[out].
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias) {
  if (x.ndim() != 2 || w.ndim() != 2)
    throw DimensionError("linear: input and weight must be 2-D");
  const int batch = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  if (w.dim(1) != in) throw DimensionError("linear: weight in-features disagree with input");
  if (bias.ndim() != 1 || bias.dim(0) != out_f)
    throw DimensionError("linear: bias length differs from out-features");
  std::vector<T> out(static_cast<size_t>(batch) * out_f);
  {
    const T* px = x.values().data();
    const T* pw = w.values().data();
    const T* pbias = bias.values().data();
    T* po = out.data();
    parallel_for(0, batch, [&](int64_t lo, int64_t hi) {
      for (int64_t b = lo; b < hi; ++b)
        for (int64_t o = 0; o < out_f; ++o) {
          double acc = static_cast<double>(pbias[o]);
          const T* xrow = px + b * in;
          const T* wrow = pw + o * in;
          for (int64_t i = 0; i < in; ++i)
            acc += static_cast<double>(xrow[i]) * static_cast<double>(wrow[i]);
          po[b * out_f + o] = static_cast<T>(acc);
        }
    });
  }
  auto xn = x.node(), wn = w.node(), biasn = bias.node();
  return detail::make_op<T>(
      {batch, out_f}, std::move(out), {x, w, bias},
      [xn, wn, biasn, batch, in, out_f](detail::Node<T>& self) {
        const T* g = self.grad.data();
        if (xn->on_tape) {
          T* dx = xn->ensure_grad().data();
          const T* pw = wn->value.data();
          parallel_for(0, batch, [&](int64_t lo, int64_t hi) {
            for (int64_t b = lo; b < hi; ++b)
              for (int64_t i = 0; i < in; ++i) {
                double acc = 0.0;
                for (int64_t o = 0; o < out_f; ++o)
                  acc += static_cast<double>(g[b * out_f + o]) * static_cast<double>(pw[o * in + i]);
                dx[b * in + i] += static_cast<T>(acc);
              }
          });
        }
        if (wn->on_tape) {
          T* dw = wn->ensure_grad().data();
          const T* px = xn->value.data();
          parallel_for(0, out_f, [&](int64_t lo, int64_t hi) {
            for (int64_t o = lo; o < hi; ++o)
              for (int64_t i = 0; i < in; ++i) {
                double acc = 0.0;
                for (int64_t b = 0; b < batch; ++b)
                  acc += static_cast<double>(g[b * out_f + o]) * static_cast<double>(px[b * in + i]);
                dw[o * in + i] += static_cast<T>(acc);
              }
          });
        }
        if (biasn->on_tape) {
          T* db = biasn->ensure_grad().data();
          for (int64_t o = 0; o < out_f; ++o) {
            double acc = 0.0;
            for (int64_t b = 0; b < batch; ++b) acc += static_cast<double>(g[b * out_f + o]);
            db[o] += static_cast<T>(acc);
          }
        }
      });
}

// ---- convolution -----------------------------------------------------------

// Cross-correlation, NCHW, no dilation/groups. H' = (H + 2p - kh)/stride + 1.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, int stride, int padding) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw DimensionError("conv2d: input must be [N,C,H,W] and weight [F,C,kh,kw]");
  if (stride < 1 || padding < 0) throw DimensionError("conv2d: bad stride/padding");
  const int batch = x.dim(0), in_c = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  const int out_c = w.dim(0), kc = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (kc != in_c) throw DimensionError("conv2d: weight channel count differs from input");
  const int out_h = (in_h + 2 * padding - kh) / stride + 1;
  const int out_w = (in_w + 2 * padding - kw) / stride + 1;
  if (in_h + 2 * padding < kh || in_w + 2 * padding < kw || out_h <= 0 || out_w <= 0)
    throw DimensionError("conv2d: kernel larger than padded input");

  std::vector<T> out(static_cast<size_t>(batch) * out_c * out_h * out_w, T(0));
  const int64_t x_plane = static_cast<int64_t>(in_h) * in_w;
  const int64_t o_plane = static_cast<int64_t>(out_h) * out_w;
  {
    const T* px = x.values().data();
    const T* pw = w.values().data();
    T* po = out.data();
    parallel_for(0, batch, [&](int64_t lo, int64_t hi) {
      for (int64_t n = lo; n < hi; ++n)
        for (int64_t f = 0; f < out_c; ++f) {
          T* oimg = po + (n * out_c + f) * o_plane;
          for (int64_t c = 0; c < in_c; ++c) {
            const T* ximg = px + (n * in_c + c) * x_plane;
            const T* wker = pw + (f * in_c + c) * kh * kw;
            for (int64_t r = 0; r < kh; ++r)
              for (int64_t s = 0; s < kw; ++s) {
                const T wv = wker[r * kw + s];
                if (wv == T(0)) continue;
                for (int64_t oh = 0; oh < out_h; ++oh) {
                  const int64_t ih = oh * stride - padding + r;
                  if (ih < 0 || ih >= in_h) continue;
                  const T* xrow = ximg + ih * in_w;
                  T* orow = oimg + oh * out_w;
                  for (int64_t ow = 0; ow < out_w; ++ow) {
                    const int64_t iw = ow * stride - padding + s;
                    if (iw < 0 || iw >= in_w) continue;
                    orow[ow] += wv * xrow[iw];
                  }
                }
              }
          }
        }
    });
  }
  auto xn = x.node(), wn = w.node();
  return detail::make_op<T>(
      {batch, out_c, out_h, out_w}, std::move(out), {x, w},
      [xn, wn, batch, in_c, in_h, in_w, out_c, kh, kw, out_h, out_w, stride,
       padding, x_plane, o_plane](detail::Node<T>& self) {
        const T* g = self.grad.data();
        if (xn->on_tape) {
          T* dx = xn->ensure_grad().data();
          const T* pw = wn->value.data();
          parallel_for(0, batch, [&](int64_t lo, int64_t hi) {
            for (int64_t n = lo; n < hi; ++n)
              for (int64_t f = 0; f < out_c; ++f) {
                const T* gimg = g + (n * out_c + f) * o_plane;
                for (int64_t c = 0; c < in_c; ++c) {
                  T* dximg = dx + (n * in_c + c) * x_plane;
                  const T* wker = pw + (f * in_c + c) * kh * kw;
                  for (int64_t r = 0; r < kh; ++r)
                    for (int64_t s = 0; s < kw; ++s) {
                      const T wv = wker[r * kw + s];
                      if (wv == T(0)) continue;
                      for (int64_t oh = 0; oh < out_h; ++oh) {
                        const int64_t ih = oh * stride - padding + r;
                        if (ih < 0 || ih >= in_h) continue;
                        const T* grow = gimg + oh * out_w;
                        T* dxrow = dximg + ih * in_w;
                        for (int64_t ow = 0; ow < out_w; ++ow) {
                          const int64_t iw = ow * stride - padding + s;
                          if (iw < 0 || iw >= in_w) continue;
                          dxrow[iw] += wv * grow[ow];
                        }
                      }
                    }
                }
              }
          });
        }
        if (wn->on_tape) {
          T* dw = wn->ensure_grad().data();
          const T* px = xn->value.data();
          parallel_for(0, out_c, [&](int64_t lo, int64_t hi) {
            for (int64_t f = lo; f < hi; ++f)
              for (int64_t n = 0; n < batch; ++n) {
                const T* gimg = g + (n * out_c + f) * o_plane;
                for (int64_t c = 0; c < in_c; ++c) {
                  const T* ximg = px + (n * in_c + c) * x_plane;
                  T* dwker = dw + (f * in_c + c) * kh * kw;
                  for (int64_t r = 0; r < kh; ++r)
                    for (int64_t s = 0; s < kw; ++s) {
                      double acc = 0.0;
                      for (int64_t oh = 0; oh < out_h; ++oh) {
                        const int64_t ih = oh * stride - padding + r;
                        if (ih < 0 || ih >= in_h) continue;
                        const T* grow = gimg + oh * out_w;
                        const T* xrow = ximg + ih * in_w;
                        for (int64_t ow = 0; ow < out_w; ++ow) {
                          const int64_t iw = ow * stride - padding + s;
                          if (iw < 0 || iw >= in_w) continue;
                          acc += static_cast<double>(grow[ow]) * static_cast<double>(xrow[iw]);
                        }
                      }
                      dwker[r * kw + s] += static_cast<T>(acc);
                    }
                }
              }
          });
        }
      });
}

// [N,C,H,W] -> [N,C] spatial mean.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  if (x.ndim() != 4) throw DimensionError("global_avg_pool: input must be [N,C,H,W]");
  const int batch = x.dim(0), ch = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  std::vector<T> out(static_cast<size_t>(batch) * ch);
  const T* px = x.values().data();
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      const T* p = px + (n * ch + c) * plane;
      for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
      out[static_cast<size_t>(n * ch + c)] = static_cast<T>(acc / static_cast<double>(plane));
    }
  auto xn = x.node();
  return detail::make_op<T>(
      {batch, ch}, std::move(out), {x}, [xn, batch, ch, plane](detail::Node<T>& self) {
        if (!xn->on_tape) return;
        const T* g = self.grad.data();
        T* dx = xn->ensure_grad().data();
        const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
        for (int64_t n = 0; n < batch; ++n)
          for (int64_t c = 0; c < ch; ++c) {
            const T gv = g[n * ch + c] * inv;
            T* p = dx + (n * ch + c) * plane;
            for (int64_t i = 0; i < plane; ++i) p[i] += gv;
          }
      });
}

// ---- softmax ---------------------------------------------------------------

// Row-wise over the last axis, max-subtracted. Rows sum to 1 within
// rounding; NaN inputs propagate.
template <typename T>
TensorT<T> softmax(const TensorT<T>& x) {
  if (x.ndim() < 1) throw DimensionError("softmax: empty shape");
  const int k = x.dim(x.ndim() - 1);
  const int64_t rows = static_cast<int64_t>(x.numel()) / k;
  std::vector<T> out(x.numel());
  const T* px = x.values().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xi = px + r * k;
    T* oi = out.data() + r * k;
    T mx = xi[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, xi[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      oi[j] = std::exp(xi[j] - mx);
      denom += static_cast<double>(oi[j]);
    }
    const T inv = static_cast<T>(1.0 / denom);
    for (int64_t j = 0; j < k; ++j) oi[j] *= inv;
  }
  auto xn = x.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x}, [xn, rows, k](detail::Node<T>& self) {
        if (!xn->on_tape) return;
        const T* g = self.grad.data();
        const T* p = self.value.data();
        T* dx = xn->ensure_grad().data();
        for (int64_t r = 0; r < rows; ++r) {
          const T* gi = g + r * k;
          const T* pi = p + r * k;
          double inner = 0.0;
          for (int64_t j = 0; j < k; ++j)
            inner += static_cast<double>(gi[j]) * static_cast<double>(pi[j]);
          for (int64_t j = 0; j < k; ++j)
            dx[r * k + j] += pi[j] * (gi[j] - static_cast<T>(inner));
        }
      });
}

// ---- batch norm --------------------------------------------------------

// 2-D batch norm over [N,C,H,W]. Training mode uses biased batch variance
// for normalization and updates running stats in place (unbiased variance,
// torch convention); eval mode normalizes with the running buffers.
template <typename T>
TensorT<T> batchnorm2d(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                       std::vector<T>& running_mean, std::vector<T>& running_var,
                       bool training, double momentum = 0.1, double eps = 1e-5) {
  auto geom = detail::channel_geom(x, gamma.numel(), "batchnorm2d");
  if (beta.numel() != gamma.numel() || running_mean.size() != gamma.numel() ||
      running_var.size() != gamma.numel())
    throw DimensionError("batchnorm2d: per-channel buffers disagree");
  const int64_t ch = geom.channels;
  const int64_t m = geom.outer * geom.inner;  // elements per channel
  std::vector<T> mean_c(static_cast<size_t>(ch)), invstd_c(static_cast<size_t>(ch));
  const T* px = x.values().data();
  if (training) {
    if (m < 2) throw ContractError("batchnorm2d: training mode needs >=2 samples per channel");
    for (int64_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (int64_t o = 0; o < geom.outer; ++o) {
        const T* p = px + (o * ch + c) * geom.inner;
        for (int64_t i = 0; i < geom.inner; ++i) acc += static_cast<double>(p[i]);
      }
      const double mu = acc / static_cast<double>(m);
      double var = 0.0;
      for (int64_t o = 0; o < geom.outer; ++o) {
        const T* p = px + (o * ch + c) * geom.inner;
        for (int64_t i = 0; i < geom.inner; ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          var += d * d;
        }
      }
      const double biased = var / static_cast<double>(m);
      const double unbiased = var / static_cast<double>(m - 1);
      mean_c[static_cast<size_t>(c)] = static_cast<T>(mu);
      invstd_c[static_cast<size_t>(c)] = static_cast<T>(1.0 / std::sqrt(biased + eps));
      running_mean[static_cast<size_t>(c)] = static_cast<T>(
          (1.0 - momentum) * static_cast<double>(running_mean[static_cast<size_t>(c)]) + momentum * mu);
      running_var[static_cast<size_t>(c)] = static_cast<T>(
          (1.0 - momentum) * static_cast<double>(running_var[static_cast<size_t>(c)]) + momentum * unbiased);
    }
  } else {
    for (int64_t c = 0; c < ch; ++c) {
      mean_c[static_cast<size_t>(c)] = running_mean[static_cast<size_t>(c)];
      invstd_c[static_cast<size_t>(c)] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(running_var[static_cast<size_t>(c)]) + eps));
    }
  }

  std::vector<T> out(x.numel());
  const T* pg = gamma.values().data();
  const T* pb = beta.values().data();
  for (int64_t o = 0; o < geom.outer; ++o)
    for (int64_t c = 0; c < ch; ++c) {
      const T mu = mean_c[static_cast<size_t>(c)];
      const T is = invstd_c[static_cast<size_t>(c)];
      const T gg = pg[c], bb = pb[c];
      const int64_t base = (o * ch + c) * geom.inner;
      for (int64_t i = 0; i < geom.inner; ++i)
        out[static_cast<size_t>(base + i)] = (px[base + i] - mu) * is * gg + bb;
    }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, geom, mean_c, invstd_c, training, m](detail::Node<T>& self) {
        const int64_t ch = geom.channels;
        const T* g = self.grad.data();
        const T* px = xn->value.data();
        const T* pg = gn->value.data();
        T* dx = xn->on_tape ? xn->ensure_grad().data() : nullptr;
        T* dg = gn->on_tape ? gn->ensure_grad().data() : nullptr;
        T* db = bn->on_tape ? bn->ensure_grad().data() : nullptr;
        for (int64_t c = 0; c < ch; ++c) {
          const double mu = static_cast<double>(mean_c[static_cast<size_t>(c)]);
          const double is = static_cast<double>(invstd_c[static_cast<size_t>(c)]);
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t o = 0; o < geom.outer; ++o) {
            const int64_t base = (o * ch + c) * geom.inner;
            for (int64_t i = 0; i < geom.inner; ++i) {
              const double gv = static_cast<double>(g[base + i]);
              sum_g += gv;
              sum_gx += gv * ((static_cast<double>(px[base + i]) - mu) * is);
            }
          }
          if (dg) dg[c] += static_cast<T>(sum_gx);
          if (db) db[c] += static_cast<T>(sum_g);
          if (!dx) continue;
          const double gval = static_cast<double>(pg[c]);
          if (training) {
            const double inv_m = 1.0 / static_cast<double>(m);
            for (int64_t o = 0; o < geom.outer; ++o) {
              const int64_t base = (o * ch + c) * geom.inner;
              for (int64_t i = 0; i < geom.inner; ++i) {
                const double xhat = (static_cast<double>(px[base + i]) - mu) * is;
                const double gv = static_cast<double>(g[base + i]);
                dx[base + i] += static_cast<T>(gval * is * (gv - inv_m * sum_g - inv_m * xhat * sum_gx));
              }
            }
          } else {
            for (int64_t o = 0; o < geom.outer; ++o) {
              const int64_t base = (o * ch + c) * geom.inner;
              for (int64_t i = 0; i < geom.inner; ++i)
                dx[base + i] += static_cast<T>(gval * is * static_cast<double>(g[base + i]));
            }
          }
        }
      });
}

// ---- misc helpers ----------------------------------------------------------

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.values())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
uint64_t value_hash(const TensorT<T>& t, uint64_t h = 1469598103934665603ULL) {
  return fnv1a(t.values().data(), t.values().size() * sizeof(T), h);
}

}  // namespace burnkit
