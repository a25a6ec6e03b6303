#pragma once

// Bundled supervised pretrainer for the FP teacher extractor. Trains the
// whole teacher (extractor + classifier) with cross entropy at desk scale
// and reports per-epoch loss and full-pass accuracy; the resulting
// checkpoint is the frozen-extractor input of the main pretraining run.

#include <cstdint>
#include <string>
#include <vector>

#include "burnkit/checkpoint.hpp"
#include "burnkit/data.hpp"
#include "burnkit/eval.hpp"
#include "burnkit/loss.hpp"
#include "burnkit/network.hpp"
#include "burnkit/trainer.hpp"

namespace burnkit {

struct TeacherPretrainConfig {
  int epochs = 10;
  int batch_size = 64;
  uint64_t seed = 1;
  OptimConfig optim{OptimKind::SgdMomentum, 0.05, 0.9, 1e-5, 0.9, 0.999, 1e-8, LrDecay::Cosine};
  AugmentSpec augment;
};

struct TeacherEpochMetric {
  int epoch = 0;
  double mean_loss = 0.0;
  float train_top1 = 0.0f;

  static const char* csv_header() { return "epoch,mean_loss,train_top1"; }
  std::string csv_row() const {
    return std::to_string(epoch) + "," + fmt_g(mean_loss) + "," + fmt_g(train_top1);
  }
};

// Full-pass top-1 in eval mode (frozen batch-norm statistics), computed
// without touching the tape.
inline float teacher_accuracy(FpTeacher& teacher, const Dataset& data, const AugmentSpec& aug,
                              int batch_size = 128) {
  NoGradGuard ng;
  const bool was_trainable = teacher.extractor_trainable();
  teacher.set_extractor_trainable(false);
  const int c = data.channels, h = data.height, w = data.width;
  const size_t img = data.image_size();
  int hits = 0;
  for (int lo = 0; lo < data.count(); lo += batch_size) {
    const int b = std::min(batch_size, data.count() - lo);
    Tensor x = Tensor::zeros({b, c, h, w});
    std::vector<uint16_t> y(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
      const float* src = data.image(lo + i);
      y[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(lo + i)];
      for (size_t px = 0; px < img; ++px) {
        const int ch = static_cast<int>(px / (static_cast<size_t>(h) * w));
        const float m = aug.mean.empty() ? 0.0f : aug.mean[static_cast<size_t>(ch)];
        const float s = aug.mean.empty() ? 1.0f : aug.stdev[static_cast<size_t>(ch)];
        x.values()[static_cast<size_t>(i) * img + px] = (src[px] - m) / s;
      }
    }
    Tensor probs = teacher.forward(x, /*training=*/false);
    hits += static_cast<int>(std::lround(
        static_cast<double>(topk_accuracy(probs, y, 1)) * b));
  }
  teacher.set_extractor_trainable(was_trainable);
  return static_cast<float>(hits) / static_cast<float>(data.count());
}

inline std::vector<TeacherEpochMetric> pretrain_teacher(FpTeacher& teacher, const Dataset& data,
                                                        const TeacherPretrainConfig& cfg) {
  if (data.count() == 0) throw ContractError("pretrain_teacher: empty dataset");
  teacher.set_extractor_trainable(true);
  std::vector<TeacherEpochMetric> metrics;
  const int steps_per_epoch = (data.count() + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total = static_cast<int64_t>(steps_per_epoch) * cfg.epochs;
  if (total > 0) {
    Optimizer opt(cfg.optim, total);
    BatchIterator batches(data, cfg.augment, cfg.batch_size, cfg.seed);
    int64_t t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      double loss_sum = 0.0;
      for (int s = 0; s < steps_per_epoch; ++s, ++t) {
        Batch batch = batches.next();
        Tensor probs = teacher.forward(batch.images, /*training=*/true);
        Tensor loss = nll_loss(probs, batch.labels);
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv))
          throw NumericError("non-finite teacher loss at iteration " + std::to_string(t));
        loss_sum += lv;
        teacher.registry().zero_grad();
        backward(loss);
        opt.step(teacher.registry().params(), t);
      }
      TeacherEpochMetric m;
      m.epoch = epoch;
      m.mean_loss = loss_sum / steps_per_epoch;
      m.train_top1 = teacher_accuracy(teacher, data, cfg.augment);
      metrics.push_back(m);
    }
  }
  teacher.set_extractor_trainable(false);
  return metrics;
}

}  // namespace burnkit
