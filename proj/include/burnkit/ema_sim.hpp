#pragma once

// Toy model of backbone/EMA-target divergence. Both start as the same
// random vector; each iteration the backbone takes a Gaussian step scaled
// by the learning rate and the target follows with an EMA update using the
// new backbone:
//   backbone <- backbone + eta * dn,   dn ~ N(0, I)
//   target   <- tau * target + (1 - tau) * backbone
//
// Reported divergence is the L2 distance between the unit-normalized
// vectors; the binary mode sign-binarizes before normalizing, which is how
// binarization amplifies small coordinate differences into full sign
// flips. distance() itself is the raw measurement on whatever vectors it
// is given.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "burnkit/common.hpp"
#include "burnkit/rng.hpp"

namespace burnkit {

enum class EmaMode { FP, Binary };

inline const char* to_string(EmaMode m) { return m == EmaMode::FP ? "fp" : "binary"; }

struct EmaSimConfig {
  int dim = 100;
  float eta = 4.8f;   // backbone step size
  float tau = 0.99f;  // EMA momentum
  int iters = 100;
  int runs = 10;
  EmaMode mode = EmaMode::FP;
  uint64_t seed = 1;

  void validate() const {
    if (dim < 1 || iters < 0 || runs < 1) throw ConfigError("ema-sim: dim/iters/runs out of range");
    if (tau < 0.0f || tau > 1.0f) throw ConfigError("ema-sim: tau must lie in [0,1]");
  }
};

// One EMA step; the target update consumes the already-updated backbone.
inline void ema_step(std::vector<float>& backbone, std::vector<float>& target, float eta,
                     float tau, Rng& rng) {
  if (backbone.size() != target.size()) throw DimensionError("ema_step: vector sizes differ");
  for (auto& b : backbone) b += eta * static_cast<float>(rng.normal());
  for (size_t i = 0; i < target.size(); ++i)
    target[i] = tau * target[i] + (1.0f - tau) * backbone[i];
}

// Raw L2 distance. FP compares the vectors as-is; Binary compares their
// elementwise signs (sign(0) = +1), so d disagreeing coordinates give 2*sqrt(d).
inline float distance(const std::vector<float>& backbone, const std::vector<float>& target,
                      EmaMode mode) {
  if (backbone.size() != target.size()) throw DimensionError("distance: vector sizes differ");
  double acc = 0.0;
  if (mode == EmaMode::FP) {
    for (size_t i = 0; i < backbone.size(); ++i) {
      const double d = static_cast<double>(backbone[i]) - static_cast<double>(target[i]);
      acc += d * d;
    }
  } else {
    for (size_t i = 0; i < backbone.size(); ++i) {
      const double sb = backbone[i] >= 0.0f ? 1.0 : -1.0;
      const double st = target[i] >= 0.0f ? 1.0 : -1.0;
      const double d = sb - st;
      acc += d * d;
    }
  }
  return static_cast<float>(std::sqrt(acc));
}

namespace detail {
inline std::vector<float> unit_normalized(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  const double norm = std::sqrt(acc);
  std::vector<float> out(v.size());
  if (norm < 1e-12) return out;
  for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}
}  // namespace detail

struct EmaTrace {
  // per_run[r][t] for t in [0, iters]; iteration 0 is the shared init, so
  // its distance is exactly 0.
  std::vector<std::vector<float>> per_run;
  std::vector<float> mean;  // across runs, per iteration
  std::vector<float> stdev; // sample standard deviation across runs

  float final_mean() const { return mean.back(); }
  float final_stdev() const { return stdev.back(); }
};

inline EmaTrace run_sim(const EmaSimConfig& cfg) {
  cfg.validate();
  EmaTrace trace;
  trace.per_run.assign(static_cast<size_t>(cfg.runs),
                       std::vector<float>(static_cast<size_t>(cfg.iters) + 1, 0.0f));
  // per-run streams derive from (seed, run), so runs are order-independent
  const float inv_sqrt_dim = 1.0f / std::sqrt(static_cast<float>(cfg.dim));
  for (int r = 0; r < cfg.runs; ++r) {
    Rng rng(cfg.seed, 0xe0a0 + static_cast<uint64_t>(r));
    std::vector<float> backbone(static_cast<size_t>(cfg.dim));
    rng.fill_normal(std::span<float>(backbone));
    std::vector<float> target = backbone;  // identical init
    // Both modes report the distance between unit-normalized vectors: the
    // FP pair is normalized directly; a sign vector has norm sqrt(dim), so
    // dividing the raw binary distance by sqrt(dim) is the same
    // normalization applied after binarizing.
    auto measure = [&]() {
      if (cfg.mode == EmaMode::Binary) return distance(backbone, target, cfg.mode) * inv_sqrt_dim;
      const auto nb = detail::unit_normalized(backbone);
      const auto nt = detail::unit_normalized(target);
      return distance(nb, nt, cfg.mode);
    };
    trace.per_run[static_cast<size_t>(r)][0] = measure();
    for (int t = 1; t <= cfg.iters; ++t) {
      ema_step(backbone, target, cfg.eta, cfg.tau, rng);
      trace.per_run[static_cast<size_t>(r)][static_cast<size_t>(t)] = measure();
    }
  }
  const size_t rows = static_cast<size_t>(cfg.iters) + 1;
  trace.mean.resize(rows);
  trace.stdev.resize(rows);
  for (size_t t = 0; t < rows; ++t) {
    double m = 0.0;
    for (int r = 0; r < cfg.runs; ++r) m += static_cast<double>(trace.per_run[static_cast<size_t>(r)][t]);
    m /= cfg.runs;
    double var = 0.0;
    for (int r = 0; r < cfg.runs; ++r) {
      const double d = static_cast<double>(trace.per_run[static_cast<size_t>(r)][t]) - m;
      var += d * d;
    }
    var = cfg.runs > 1 ? var / (cfg.runs - 1) : 0.0;
    trace.mean[t] = static_cast<float>(m);
    trace.stdev[t] = static_cast<float>(std::sqrt(var));
  }
  return trace;
}

// Per-run CSV: mode,run,iter,distance. Aggregate CSV: mode,iter,mean,std.
inline void write_trace_csv(const EmaTrace& trace, EmaMode mode, const std::string& runs_path,
                            const std::string& agg_path) {
  std::ofstream runs(runs_path, std::ios::trunc);
  if (!runs) throw IoError("cannot open CSV for writing: " + runs_path);
  runs << "mode,run,iter,distance\n";
  for (size_t r = 0; r < trace.per_run.size(); ++r)
    for (size_t t = 0; t < trace.per_run[r].size(); ++t)
      runs << to_string(mode) << ',' << r << ',' << t << ',' << fmt_g(trace.per_run[r][t]) << "\n";
  if (!runs) throw IoError("write failed: " + runs_path);

  std::ofstream agg(agg_path, std::ios::trunc);
  if (!agg) throw IoError("cannot open CSV for writing: " + agg_path);
  agg << "mode,iter,mean,std\n";
  for (size_t t = 0; t < trace.mean.size(); ++t)
    agg << to_string(mode) << ',' << t << ',' << fmt_g(trace.mean[t]) << ','
        << fmt_g(trace.stdev[t]) << "\n";
  if (!agg) throw IoError("write failed: " + agg_path);
}

}  // namespace burnkit
