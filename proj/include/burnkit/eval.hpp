#pragma once

// Linear-evaluation protocol: freeze the pretrained extractor, train a
// fresh linear classifier with supervision on cached features, report
// top-1 on a held-out split. Probe schedule: SGD with momentum 0.9, no
// weight decay, step decay x0.1 at 60% and 80% of the probe epochs.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "burnkit/common.hpp"
#include "burnkit/data.hpp"
#include "burnkit/loss.hpp"
#include "burnkit/network.hpp"
#include "burnkit/rng.hpp"
#include "burnkit/tensor.hpp"

namespace burnkit {

// Fraction of rows whose true label ranks among the k largest logits.
// Ties resolve toward the lowest index: the label wins a tied slot only
// against higher-indexed entries.
inline float topk_accuracy(const std::vector<float>& logits, int batch, int classes,
                           const std::vector<uint16_t>& labels, int k) {
  if (k < 1 || k > classes) throw ContractError("topk_accuracy: k outside [1, K]");
  if (static_cast<size_t>(batch) * classes != logits.size() ||
      static_cast<size_t>(batch) != labels.size())
    throw DimensionError("topk_accuracy: logits/labels sizes disagree");
  if (batch == 0) return 0.0f;
  int hits = 0;
  for (int r = 0; r < batch; ++r) {
    const float* row = logits.data() + static_cast<size_t>(r) * classes;
    const int y = labels[static_cast<size_t>(r)];
    if (y >= classes) throw ContractError("topk_accuracy: label id >= class count");
    const float ly = row[y];
    int rank = 0;  // entries ranked strictly ahead of the label
    for (int j = 0; j < classes; ++j) {
      if (row[j] > ly || (row[j] == ly && j < y)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<float>(hits) / static_cast<float>(batch);
}

inline float topk_accuracy(const Tensor& logits, const std::vector<uint16_t>& labels, int k) {
  if (logits.ndim() != 2) throw DimensionError("topk_accuracy: logits must be [B,K]");
  return topk_accuracy(logits.values(), logits.dim(0), logits.dim(1), labels, k);
}

// ---- feature extraction -----------------------------------------------

// Runs the frozen extractor over the whole dataset in inference mode
// (no tape, batch-norm on running statistics), in dataset order with no
// crops or flips; only the per-channel normalization applies.
inline std::vector<float> extract_features(BinaryStudent& student, const Dataset& data,
                                           const AugmentSpec& aug, int batch_size = 128) {
  NoGradGuard ng;
  const int d = student.feature_dim();
  const int c = data.channels, h = data.height, w = data.width;
  const size_t img = data.image_size();
  std::vector<float> features(static_cast<size_t>(data.count()) * d);
  for (int lo = 0; lo < data.count(); lo += batch_size) {
    const int b = std::min(batch_size, data.count() - lo);
    Tensor x = Tensor::zeros({b, c, h, w});
    float* dst = x.values().data();
    for (int i = 0; i < b; ++i) {
      const float* src = data.image(lo + i);
      for (int ch = 0; ch < c; ++ch) {
        const float m = aug.mean.empty() ? 0.0f : aug.mean[static_cast<size_t>(ch)];
        const float inv = aug.mean.empty() ? 1.0f : 1.0f / aug.stdev[static_cast<size_t>(ch)];
        const size_t plane = static_cast<size_t>(h) * w;
        for (size_t px = 0; px < plane; ++px)
          dst[static_cast<size_t>(i) * img + static_cast<size_t>(ch) * plane + px] =
              (src[static_cast<size_t>(ch) * plane + px] - m) * inv;
      }
    }
    Tensor v = student.features(x, /*training=*/false);
    std::copy(v.values().begin(), v.values().end(),
              features.begin() + static_cast<size_t>(lo) * d);
  }
  return features;
}

// ---- linear probe --------------------------------------------------------

struct ProbeConfig {
  int epochs = 40;
  int batch_size = 64;
  double lr = 0.3;  // desk-scale rescale of the reference schedule's 30
  double momentum = 0.9;
  uint64_t seed = 1;
};

struct ProbeResult {
  float top1 = 0.0f;
  uint64_t extractor_hash_before = 0;
  uint64_t extractor_hash_after = 0;
};

namespace detail {

// Plain SGD-with-momentum softmax regression on fixed feature rows.
class LinearHead {
public:
  LinearHead(int in_dim, int classes, uint64_t seed) {
    Rng rng(seed, 0x9c0be);
    w_ = kaiming_uniform({classes, in_dim}, in_dim, rng);
    b_ = Tensor::zeros({classes});
    w_.set_requires_grad(true);
    b_.set_requires_grad(true);
    vw_.assign(w_.numel(), 0.0f);
    vb_.assign(b_.numel(), 0.0f);
  }

  Tensor forward(const Tensor& x) { return linear(x, w_, b_); }

  void sgd_step(double lr, double momentum) {
    auto apply = [&](Tensor& t, std::vector<float>& vel) {
      auto& w = t.values();
      const auto& g = t.grad_view();
      for (size_t j = 0; j < w.size(); ++j) {
        const double v = momentum * static_cast<double>(vel[j]) + static_cast<double>(g[j]);
        vel[j] = static_cast<float>(v);
        w[j] = static_cast<float>(static_cast<double>(w[j]) - lr * v);
      }
    };
    apply(w_, vw_);
    apply(b_, vb_);
  }

  void zero_grad() {
    w_.zero_grad();
    b_.zero_grad();
  }

private:
  Tensor w_, b_;
  std::vector<float> vw_, vb_;
};

}  // namespace detail

// Probe core on precomputed feature rows; also the entry point for
// synthetic-feature oracles in tests.
inline float probe_features_top1(const std::vector<float>& train_feats,
                                 const std::vector<uint16_t>& train_labels,
                                 const std::vector<float>& eval_feats,
                                 const std::vector<uint16_t>& eval_labels, int d, int classes,
                                 const ProbeConfig& cfg) {
  const int n = static_cast<int>(train_labels.size());
  if (train_feats.size() != static_cast<size_t>(n) * d ||
      eval_feats.size() != eval_labels.size() * static_cast<size_t>(d))
    throw DimensionError("probe: feature row count disagrees with labels");
  for (uint16_t l : train_labels)
    if (l >= classes) throw ContractError("probe: label id >= class count");
  for (uint16_t l : eval_labels)
    if (l >= classes) throw ContractError("probe: label id >= class count");

  detail::LinearHead head(d, classes, cfg.seed);
  std::vector<int> order(static_cast<size_t>(n));
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    if (epoch >= (cfg.epochs * 4) / 5)
      lr *= 0.01;
    else if (epoch >= (cfg.epochs * 3) / 5)
      lr *= 0.1;
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(cfg.seed, 0x960be + static_cast<uint64_t>(epoch));
    rng.shuffle(std::span<int>(order));
    for (int s = 0; s < steps_per_epoch; ++s) {
      const int lo = s * cfg.batch_size;
      const int b = std::min(cfg.batch_size, n - lo);
      if (b <= 0) break;
      Tensor x = Tensor::zeros({b, d});
      std::vector<uint16_t> y(static_cast<size_t>(b));
      for (int i = 0; i < b; ++i) {
        const int idx = order[static_cast<size_t>(lo + i)];
        std::copy_n(train_feats.begin() + static_cast<size_t>(idx) * d, d,
                    x.values().begin() + static_cast<size_t>(i) * d);
        y[static_cast<size_t>(i)] = train_labels[static_cast<size_t>(idx)];
      }
      Tensor probs = softmax(head.forward(x));
      Tensor loss = nll_loss(probs, y);
      head.zero_grad();
      backward(loss);
      head.sgd_step(lr, cfg.momentum);
    }
  }

  NoGradGuard ng;
  Tensor x = Tensor::from({static_cast<int>(eval_labels.size()), d}, eval_feats);
  Tensor logits = head.forward(x);
  return topk_accuracy(logits, eval_labels, 1);
}

// Trains only the probe on features from the frozen extractor and scores
// top-1 on the held-out split. The extractor hash is checked unchanged.
inline ProbeResult linear_probe(BinaryStudent& student, const Dataset& train_data,
                                const Dataset& eval_data, const AugmentSpec& aug,
                                const ProbeConfig& cfg) {
  ProbeResult result;
  result.extractor_hash_before = student.state_hash();
  const int d = student.feature_dim();
  std::vector<float> feats = extract_features(student, train_data, aug);
  std::vector<float> eval_feats = extract_features(student, eval_data, aug);
  result.top1 = probe_features_top1(feats, train_data.labels, eval_feats, eval_data.labels, d,
                                    train_data.num_classes, cfg);
  result.extractor_hash_after = student.state_hash();
  if (result.extractor_hash_after != result.extractor_hash_before)
    throw ContractError("linear_probe: extractor state changed during probing");
  return result;
}

}  // namespace burnkit
