#pragma once

// Independent oracles for the test suites.
//
// Gradient checks run the template ops instantiated at f64 and compare
// analytic backward against central finite differences (eps = 1e-3).
// Relative error uses a 1e-2 denominator floor, so near-zero entries are
// held to an absolute 1e-6 instead of dividing by noise.
//
// Straight-through ops are checked against their smooth surrogate twin
// (sign -> hardtanh) under a fixed random linear readout, where the STE
// backward is the exact derivative of the surrogate.

#include <cmath>
#include <functional>
#include <vector>

#include "burnkit/rng.hpp"
#include "burnkit/tensor.hpp"

namespace oracles {

using DTensor = burnkit::TensorT<double>;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

// Random tensor with f32-representable values in [lo, hi], kept at least
// `margin` away from every value in `kinks` (piecewise ops are checked off
// their corner points).
inline DTensor rand_tensor(std::vector<int> shape, burnkit::Rng& rng, double lo = -2.0,
                           double hi = 2.0, const std::vector<double>& kinks = {},
                           double margin = 0.02) {
  DTensor t = DTensor::zeros(std::move(shape));
  for (auto& v : t.values()) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      v = static_cast<double>(static_cast<float>(rng.uniform(lo, hi)));
      bool ok = true;
      for (double k : kinks)
        if (std::abs(v - k) < margin) ok = false;
      if (ok) break;
    }
  }
  return t;
}

// Builder maps fresh copies of the inputs to a scalar loss. Analytic
// gradients come from one reverse sweep; numeric ones from central
// differences of the same builder. Tensors larger than max_coords get a
// deterministic coordinate subsample.
struct GradCheck {
  double max_rel_err = 0.0;
  size_t coords_checked = 0;
};

inline GradCheck gradcheck(
    const std::function<DTensor(const std::vector<DTensor>&)>& builder,
    const std::vector<DTensor>& inputs, double eps = 1e-3, size_t max_coords = 4096) {
  // analytic pass
  std::vector<DTensor> tracked;
  tracked.reserve(inputs.size());
  for (const auto& in : inputs) {
    DTensor t = in.detached();
    t.set_requires_grad(true);
    tracked.push_back(t);
  }
  DTensor loss = builder(tracked);
  burnkit::backward(loss);

  GradCheck result;
  burnkit::Rng pick(20240817);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const size_t n = inputs[i].numel();
    std::vector<size_t> coords;
    if (n <= max_coords) {
      coords.resize(n);
      for (size_t j = 0; j < n; ++j) coords[j] = j;
    } else {
      coords.resize(max_coords);
      for (auto& c : coords) c = static_cast<size_t>(pick.uniform_int(static_cast<int64_t>(n)));
    }
    const auto& analytic = tracked[i].grad_view();
    for (size_t j : coords) {
      auto fd_at = [&](double h) {
        std::vector<DTensor> probe;
        probe.reserve(inputs.size());
        for (const auto& in : inputs) probe.push_back(in.detached());
        const double orig = probe[i].values()[j];
        probe[i].values()[j] = orig + h;
        const double up = builder(probe).item();
        probe[i].values()[j] = orig - h;
        const double down = builder(probe).item();
        return (up - down) / (2.0 * h);
      };
      // a kink straddled by the eps stencil but not the eps/4 one shows up
      // as disagreement between the two estimates; take the better match
      double err = rel_err(analytic[j], fd_at(eps));
      if (err > 1e-5) err = std::min(err, rel_err(analytic[j], fd_at(eps / 4.0)));
      result.max_rel_err = std::max(result.max_rel_err, err);
      ++result.coords_checked;
    }
  }
  return result;
}

// hardtanh from primitives: clamp(x,-1,1) = relu(x+1) - relu(x-1) - 1.
// Shares its derivative 1{|x|<=1} with the clipped STE.
inline DTensor hardtanh(const DTensor& x) {
  using namespace burnkit;
  return add_scalar(sub(relu(add_scalar(x, 1.0)), relu(add_scalar(x, -1.0))), -1.0);
}

// ---- f64 reference reductions ---------------------------------------------

inline double ref_kl(const std::vector<float>& p2, const std::vector<float>& p1, int batch,
                     int k) {
  double total = 0.0;
  for (int64_t i = 0; i < static_cast<int64_t>(batch) * k; ++i)
    total += static_cast<double>(p2[i]) *
             (std::log(static_cast<double>(p2[i]) + 1e-12) -
              std::log(static_cast<double>(p1[i]) + 1e-12));
  return total / batch;
}

inline double ref_l2_norm(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

inline double ref_cosine_distance_rows(const std::vector<float>& a, const std::vector<float>& b,
                                       int batch, int d) {
  double total = 0.0;
  for (int r = 0; r < batch; ++r) {
    double dp = 0.0, na = 0.0, nb = 0.0;
    for (int j = 0; j < d; ++j) {
      const double av = a[static_cast<size_t>(r) * d + j];
      const double bv = b[static_cast<size_t>(r) * d + j];
      dp += av * bv;
      na += av * av;
      nb += bv * bv;
    }
    total += 1.0 - dp / (std::max(std::sqrt(na), 1e-12) * std::max(std::sqrt(nb), 1e-12));
  }
  return total / batch;
}

// Plain f32 GEMM over +/-1 matrices, rounded to exact integers.
inline std::vector<int32_t> ref_sign_gemm(const std::vector<float>& a,
                                          const std::vector<float>& b, int m, int k, int n) {
  std::vector<int32_t> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int kk = 0; kk < k; ++kk)
        acc += a[static_cast<size_t>(i) * k + kk] * b[static_cast<size_t>(kk) * n + j];
      out[static_cast<size_t>(i) * n + j] = static_cast<int32_t>(std::lround(acc));
    }
  return out;
}

}  // namespace oracles
