#pragma once

// Training objective: KL divergence between the binary and FP classifier
// outputs, the feature-similarity term between extractor features, the
// annealed mixing coefficient lambda(t), and their weighted combination
//   total = (1 - lambda(t)) * L_KL + lambda(t) * L_FS.
//
// KL is taken as D_KL(p2 || p1) with the binary distribution first, and no
// stop-gradient on p1: both classifiers train through the same scalar.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "burnkit/common.hpp"
#include "burnkit/tensor.hpp"

namespace burnkit {

// ---- lambda schedule -----------------------------------------------------

enum class LambdaShape { CosineAnneal, Constant, HeavisideStep };

inline const char* to_string(LambdaShape s) {
  switch (s) {
    case LambdaShape::CosineAnneal: return "cosine";
    case LambdaShape::Constant: return "constant";
    case LambdaShape::HeavisideStep: return "step";
  }
  return "?";
}

// Endpoints are kept in f64 so the annealed value at t_max/2 lands exactly
// on the f32 midpoint (e.g. 0.9/0.7 -> 0.8f); lambda_at itself reports f32.
struct LambdaSchedule {
  double lambda0 = 0.9;      // value at t = 0
  double lambda_tmax = 0.7;  // value at t = t_max
  int64_t t_max = 1;
  LambdaShape shape = LambdaShape::CosineAnneal;

  void validate() const {
    if (lambda0 < 0.0 || lambda0 > 1.0 || lambda_tmax < 0.0 || lambda_tmax > 1.0)
      throw ConfigError("lambda schedule: endpoints must lie in [0,1]");
    if (t_max < 1) throw ConfigError("lambda schedule: t_max must be positive");
  }
};

// lambda(t) = lambda_tmax - (lambda_tmax - lambda0) * (cos(pi t / t_max) + 1) / 2
// for the annealed shape; constant holds lambda0; the step drops to
// lambda_tmax at t_max/2.
inline float lambda_at(const LambdaSchedule& s, int64_t t) {
  if (t < 0 || t > s.t_max)
    throw ContractError("lambda_at: t outside [0, t_max]");
  switch (s.shape) {
    case LambdaShape::Constant:
      return static_cast<float>(s.lambda0);
    case LambdaShape::HeavisideStep:
      return static_cast<float>(
          (static_cast<double>(t) < static_cast<double>(s.t_max) / 2.0) ? s.lambda0
                                                                        : s.lambda_tmax);
    case LambdaShape::CosineAnneal:
    default: {
      const double c = std::cos(3.14159265358979323846 * static_cast<double>(t) /
                                static_cast<double>(s.t_max));
      return static_cast<float>(s.lambda_tmax - (s.lambda_tmax - s.lambda0) * (c + 1.0) / 2.0);
    }
  }
}

// ---- losses ----------------------------------------------------------------

constexpr double kLogFloor = 1e-12;   // additive floor inside logs
constexpr double kNormFloor = 1e-12;  // cosine norm guard
constexpr double kProbTol = 1e-5;     // row-sum tolerance for probability inputs

namespace detail {
template <typename T>
void check_probs(const TensorT<T>& p, const char* name) {
  if (p.ndim() != 2) throw DimensionError(std::string(name) + ": expected [B,K] probabilities");
  const int k = p.dim(1);
  const T* v = p.values().data();
  for (int64_t r = 0; r < p.dim(0); ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      const double e = static_cast<double>(v[r * k + j]);
      if (e < 0.0) throw ContractError(std::string(name) + ": negative probability entry");
      s += e;
    }
    if (std::abs(s - 1.0) > kProbTol)
      throw ContractError(std::string(name) + ": row " + std::to_string(r) +
                          " sums to " + std::to_string(s) + ", not 1");
  }
}
}  // namespace detail

// Batch-mean KL divergence D_KL(p2 || p1) = mean_b sum_k p2 log(p2/p1),
// differentiable in both arguments.
template <typename T>
TensorT<T> kl_div(const TensorT<T>& p2, const TensorT<T>& p1) {
  detail::check_same_shape(p2, p1, "kl_div");
  detail::check_probs(p2, "kl_div p2");
  detail::check_probs(p1, "kl_div p1");
  const int batch = p2.dim(0), k = p2.dim(1);
  const T* a = p2.values().data();  // p2
  const T* b = p1.values().data();  // p1
  double total = 0.0;
  for (int64_t i = 0; i < static_cast<int64_t>(p2.numel()); ++i)
    total += static_cast<double>(a[i]) *
             (std::log(static_cast<double>(a[i]) + kLogFloor) -
              std::log(static_cast<double>(b[i]) + kLogFloor));
  total /= static_cast<double>(batch);
  auto an = p2.node(), bn = p1.node();
  return detail::make_op<T>(
      {1}, {static_cast<T>(total)}, {p2, p1}, [an, bn, batch, k](detail::Node<T>& self) {
        const double g = static_cast<double>(self.grad[0]) / static_cast<double>(batch);
        const T* a = an->value.data();
        const T* b = bn->value.data();
        const int64_t n = static_cast<int64_t>(batch) * k;
        if (an->on_tape) {
          T* da = an->ensure_grad().data();
          for (int64_t i = 0; i < n; ++i) {
            const double av = static_cast<double>(a[i]);
            const double bv = static_cast<double>(b[i]);
            da[i] += static_cast<T>(g * (std::log(av + kLogFloor) - std::log(bv + kLogFloor) +
                                         av / (av + kLogFloor)));
          }
        }
        if (bn->on_tape) {
          T* db = bn->ensure_grad().data();
          for (int64_t i = 0; i < n; ++i)
            db[i] -= static_cast<T>(g * static_cast<double>(a[i]) /
                                    (static_cast<double>(b[i]) + kLogFloor));
        }
      });
}

// ---- feature similarity ----------------------------------------------------

enum class FsVariant { Cosine, L1, L2 };

inline const char* to_string(FsVariant v) {
  switch (v) {
    case FsVariant::Cosine: return "cosine";
    case FsVariant::L1: return "l1";
    case FsVariant::L2: return "l2";
  }
  return "?";
}

// Batch mean over rows of:
//   Cosine: 1 - <v1,v2> / (||v1|| ||v2||)   (bounded, in [0,2])
//   L1:     ||v1 - v2||_1                   (unbounded)
//   L2:     ||v1 - v2||_2                   (unbounded)
// Norms are clamped below at 1e-12, which also pins their gradient
// contribution to the clamped constant.
template <typename T>
TensorT<T> feature_similarity(const TensorT<T>& v1, const TensorT<T>& v2, FsVariant variant) {
  detail::check_same_shape(v1, v2, "feature_similarity");
  if (v1.ndim() != 2) throw DimensionError("feature_similarity: expected [B,D] features");
  const int batch = v1.dim(0), d = v1.dim(1);
  const T* a = v1.values().data();
  const T* b = v2.values().data();

  double total = 0.0;
  std::vector<double> row_aux(static_cast<size_t>(batch));  // cosine or l2 row norm
  std::vector<double> row_na(static_cast<size_t>(batch)), row_nb(static_cast<size_t>(batch));
  for (int64_t r = 0; r < batch; ++r) {
    const T* ar = a + r * d;
    const T* br = b + r * d;
    switch (variant) {
      case FsVariant::Cosine: {
        double dp = 0.0, na = 0.0, nb = 0.0;
        for (int64_t j = 0; j < d; ++j) {
          dp += static_cast<double>(ar[j]) * static_cast<double>(br[j]);
          na += static_cast<double>(ar[j]) * static_cast<double>(ar[j]);
          nb += static_cast<double>(br[j]) * static_cast<double>(br[j]);
        }
        na = std::max(std::sqrt(na), kNormFloor);
        nb = std::max(std::sqrt(nb), kNormFloor);
        const double cosv = dp / (na * nb);
        row_aux[static_cast<size_t>(r)] = cosv;
        row_na[static_cast<size_t>(r)] = na;
        row_nb[static_cast<size_t>(r)] = nb;
        total += 1.0 - cosv;
        break;
      }
      case FsVariant::L1: {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j)
          s += std::abs(static_cast<double>(ar[j]) - static_cast<double>(br[j]));
        total += s;
        break;
      }
      case FsVariant::L2: {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) {
          const double dv = static_cast<double>(ar[j]) - static_cast<double>(br[j]);
          s += dv * dv;
        }
        const double norm = std::max(std::sqrt(s), kNormFloor);
        row_aux[static_cast<size_t>(r)] = norm;
        total += norm;
        break;
      }
    }
  }
  total /= static_cast<double>(batch);

  auto an = v1.node(), bn = v2.node();
  return detail::make_op<T>(
      {1}, {static_cast<T>(total)}, {v1, v2},
      [an, bn, batch, d, variant, row_aux, row_na, row_nb](detail::Node<T>& self) {
        const double g = static_cast<double>(self.grad[0]) / static_cast<double>(batch);
        const T* a = an->value.data();
        const T* b = bn->value.data();
        T* da = an->on_tape ? an->ensure_grad().data() : nullptr;
        T* db = bn->on_tape ? bn->ensure_grad().data() : nullptr;
        if (!da && !db) return;
        for (int64_t r = 0; r < batch; ++r) {
          const T* ar = a + r * d;
          const T* br = b + r * d;
          switch (variant) {
            case FsVariant::Cosine: {
              const double na = row_na[static_cast<size_t>(r)];
              const double nb = row_nb[static_cast<size_t>(r)];
              const double cosv = row_aux[static_cast<size_t>(r)];
              for (int64_t j = 0; j < d; ++j) {
                const double av = static_cast<double>(ar[j]);
                const double bv = static_cast<double>(br[j]);
                if (da)
                  da[r * d + j] -= static_cast<T>(g * (bv / (na * nb) - cosv * av / (na * na)));
                if (db)
                  db[r * d + j] -= static_cast<T>(g * (av / (na * nb) - cosv * bv / (nb * nb)));
              }
              break;
            }
            case FsVariant::L1: {
              for (int64_t j = 0; j < d; ++j) {
                const double dv = static_cast<double>(ar[j]) - static_cast<double>(br[j]);
                const double s = dv > 0.0 ? 1.0 : (dv < 0.0 ? -1.0 : 0.0);
                if (da) da[r * d + j] += static_cast<T>(g * s);
                if (db) db[r * d + j] -= static_cast<T>(g * s);
              }
              break;
            }
            case FsVariant::L2: {
              const double norm = row_aux[static_cast<size_t>(r)];
              for (int64_t j = 0; j < d; ++j) {
                const double dv = static_cast<double>(ar[j]) - static_cast<double>(br[j]);
                if (da) da[r * d + j] += static_cast<T>(g * dv / norm);
                if (db) db[r * d + j] -= static_cast<T>(g * dv / norm);
              }
              break;
            }
          }
        }
      });
}

// Negative log likelihood on softmax outputs, used by the supervised
// pretrainer and the linear probe.
template <typename T>
TensorT<T> nll_loss(const TensorT<T>& probs, const std::vector<uint16_t>& labels) {
  if (probs.ndim() != 2) throw DimensionError("nll_loss: expected [B,K] probabilities");
  const int batch = probs.dim(0), k = probs.dim(1);
  if (static_cast<size_t>(batch) != labels.size())
    throw DimensionError("nll_loss: label count differs from batch");
  for (uint16_t l : labels)
    if (l >= k) throw ContractError("nll_loss: label id >= class count");
  const T* p = probs.values().data();
  double total = 0.0;
  for (int64_t r = 0; r < batch; ++r)
    total -= std::log(static_cast<double>(p[r * k + labels[static_cast<size_t>(r)]]) + kLogFloor);
  total /= static_cast<double>(batch);
  auto pn = probs.node();
  return detail::make_op<T>(
      {1}, {static_cast<T>(total)}, {probs}, [pn, batch, k, labels](detail::Node<T>& self) {
        if (!pn->on_tape) return;
        const double g = static_cast<double>(self.grad[0]) / static_cast<double>(batch);
        const T* p = pn->value.data();
        T* dp = pn->ensure_grad().data();
        for (int64_t r = 0; r < batch; ++r) {
          const int64_t idx = r * k + labels[static_cast<size_t>(r)];
          dp[idx] -= static_cast<T>(g / (static_cast<double>(p[idx]) + kLogFloor));
        }
      });
}

// ---- combined objective ------------------------------------------------

// Per-step record: raw loss terms, the mixing coefficient and per-group
// gradient norms (filled by the trainer after backward).
struct LossReport {
  int64_t iter = 0;
  int stage = 0;
  float lambda = 0.0f;
  double loss_kl = 0.0;
  double loss_fs = 0.0;
  double loss_total = 0.0;
  double gnorm_fp_classifier = 0.0;
  double gnorm_bin_extractor = 0.0;
  double gnorm_bin_classifier = 0.0;

  static const char* csv_header() {
    return "iter,stage,lambda,loss_kl,loss_fs,loss_total,"
           "gnorm_fp_classifier,gnorm_bin_extractor,gnorm_bin_classifier";
  }
  std::string csv_row() const {
    std::string s;
    s += std::to_string(iter);
    s += ',';
    s += std::to_string(stage);
    s += ',';
    s += fmt_g(lambda);
    s += ',';
    s += fmt_g(loss_kl);
    s += ',';
    s += fmt_g(loss_fs);
    s += ',';
    s += fmt_g(loss_total);
    s += ',';
    s += fmt_g(gnorm_fp_classifier);
    s += ',';
    s += fmt_g(gnorm_bin_extractor);
    s += ',';
    s += fmt_g(gnorm_bin_classifier);
    return s;
  }
};

template <typename T>
struct Objective {
  TensorT<T> total;
  LossReport report;
};

// total = (1 - lambda(t)) * kl_div(p2, p1) + lambda(t) * feature_similarity(v1, v2)
template <typename T>
Objective<T> burn_objective(const TensorT<T>& p1, const TensorT<T>& p2, const TensorT<T>& v1,
                            const TensorT<T>& v2, int64_t t, const LambdaSchedule& schedule,
                            FsVariant variant) {
  const float lam = lambda_at(schedule, t);
  TensorT<T> kl = kl_div(p2, p1);
  TensorT<T> fs = feature_similarity(v1, v2, variant);
  TensorT<T> total = add(scale(kl, static_cast<T>(1.0f - lam)), scale(fs, static_cast<T>(lam)));
  Objective<T> out;
  out.total = total;
  out.report.iter = t;
  out.report.lambda = lam;
  out.report.loss_kl = static_cast<double>(kl.item());
  out.report.loss_fs = static_cast<double>(fs.item());
  out.report.loss_total = static_cast<double>(total.item());
  return out;
}

}  // namespace burnkit
