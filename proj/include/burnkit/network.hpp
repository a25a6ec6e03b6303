#pragma once

// The three actors of the training setup: a frozen FP feature extractor
// with a trainable FP classifier on top (the moving target), and the
// binary student decoupled into extractor + classifier, plus an optional
// linear adapter that maps student features to the teacher width for the
// feature-similarity term.
//
// Teacher blocks: conv -> batchnorm -> relu. Student blocks: rsign of the
// incoming activations -> conv (latent f32 weights, binarized per mode) ->
// batchnorm -> rprelu. Both end in global average pooling; classifiers are
// a single linear layer followed by softmax.

#include <cstdint>
#include <string>
#include <vector>

#include "burnkit/binary.hpp"
#include "burnkit/checkpoint.hpp"
#include "burnkit/common.hpp"
#include "burnkit/loss.hpp"
#include "burnkit/rng.hpp"
#include "burnkit/tensor.hpp"

namespace burnkit {

struct ConvNetConfig {
  int in_channels = 3;
  int image_size = 32;
  int kernel = 3;
  std::vector<int> channels = {16, 32, 32, 64};
  std::vector<int> strides = {2, 2, 1, 2};
  int num_classes = 100;
  uint64_t seed = 1;

  void validate() const {
    if (channels.empty() || channels.size() != strides.size())
      throw ConfigError("network: channels/strides must be non-empty and equal length");
    for (int c : channels)
      if (c < 1) throw ConfigError("network: channel counts must be positive");
    for (int s : strides)
      if (s < 1) throw ConfigError("network: strides must be positive");
    if (num_classes < 2) throw ConfigError("network: need at least 2 classes");
    if (in_channels < 1 || image_size < 4) throw ConfigError("network: bad input geometry");
    if (kernel < 1 || kernel > image_size) throw ConfigError("network: bad kernel size");
  }
  int feature_dim() const { return channels.back(); }
};

namespace detail {

inline Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  rng.fill_uniform(std::span<float>(t.values()), -bound, bound);
  return t;
}

struct BatchNormLayer {
  Tensor gamma, beta;
  std::vector<float> running_mean, running_var;

  void init(int channels) {
    gamma = Tensor::full({channels}, 1.0f);
    beta = Tensor::zeros({channels});
    running_mean.assign(static_cast<size_t>(channels), 0.0f);
    running_var.assign(static_cast<size_t>(channels), 1.0f);
  }
  Tensor forward(const Tensor& x, bool training) {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, training);
  }
};

}  // namespace detail

// Named parameter/buffer registry shared by both networks. Registration
// order is the checkpoint serialization order.
class ParamRegistry {
public:
  Tensor& add_param(const std::string& name, Tensor t, ParamGroup group) {
    for (const auto& p : params_)
      if (p.name == name) throw ContractError("duplicate parameter name: " + name);
    t.set_requires_grad(group != ParamGroup::Frozen);
    params_.push_back({name, std::move(t), group});
    return params_.back().tensor;
  }
  void add_buffer(const std::string& name, std::vector<float>* data, std::vector<int> dims) {
    buffers_.push_back({name, data, std::move(dims)});
  }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  // Append every parameter and buffer, prefixed, in registration order.
  void export_tensors(Checkpoint& ckpt, const std::string& prefix) const {
    for (const auto& p : params_) ckpt.add(prefix + p.name, p.tensor.shape(), p.tensor.values());
    for (const auto& b : buffers_) ckpt.add(prefix + b.name, b.dims, *b.data);
  }

  // Load every registered tensor from the checkpoint. Missing names or
  // shape mismatches fail loudly, naming the tensor. Extra checkpoint
  // entries are ignored. A non-empty name_filter restricts the import to
  // registered names starting with it (e.g. "extractor.").
  void import_tensors(const Checkpoint& ckpt, const std::string& prefix,
                      const std::string& name_filter = "") {
    for (auto& p : params_) {
      if (!name_filter.empty() && p.name.rfind(name_filter, 0) != 0) continue;
      const CheckpointTensor* t = ckpt.find(prefix + p.name);
      if (!t) throw FormatError("checkpoint is missing tensor '" + prefix + p.name + "'");
      if (t->dims != p.tensor.shape())
        throw FormatError("checkpoint tensor '" + prefix + p.name + "' has mismatched shape");
      p.tensor.values() = t->data;
    }
    for (auto& b : buffers_) {
      if (!name_filter.empty() && b.name.rfind(name_filter, 0) != 0) continue;
      const CheckpointTensor* t = ckpt.find(prefix + b.name);
      if (!t) throw FormatError("checkpoint is missing tensor '" + prefix + b.name + "'");
      if (t->data.size() != b.data->size())
        throw FormatError("checkpoint tensor '" + prefix + b.name + "' has mismatched shape");
      *b.data = t->data;
    }
  }

  uint64_t state_hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params_)
      h = fnv1a(p.tensor.values().data(), p.tensor.values().size() * sizeof(float), h);
    for (const auto& b : buffers_) h = fnv1a(b.data->data(), b.data->size() * sizeof(float), h);
    return h;
  }

  double grad_norm(ParamGroup group) const {
    double acc = 0.0;
    for (const auto& p : params_) {
      if (p.group != group) continue;
      if (!p.tensor.has_grad())
        throw ContractError("gradient missing for '" + p.name + "'; run backward first");
      for (float g : p.tensor.grad_view()) acc += static_cast<double>(g) * g;
    }
    return std::sqrt(acc);
  }

private:
  struct Buffer {
    std::string name;
    std::vector<float>* data;
    std::vector<int> dims;
  };
  std::vector<Parameter> params_;
  std::vector<Buffer> buffers_;
};

// ---- FP teacher -----------------------------------------------------------

// Frozen conv extractor + trainable linear classifier. The extractor's
// batch norm always runs with its frozen running statistics.
class FpTeacher {
public:
  explicit FpTeacher(ConvNetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build();
  }

  const ConvNetConfig& config() const { return cfg_; }
  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }
  int feature_dim() const { return cfg_.feature_dim(); }

  // Trainable-extractor mode is used only by the supervised pretrainer.
  void set_extractor_trainable(bool trainable) {
    extractor_trainable_ = trainable;
    for (auto& p : reg_.params()) {
      const bool is_cls = p.name.rfind("classifier.", 0) == 0;
      if (!is_cls) {
        p.group = trainable ? ParamGroup::FpClassifier : ParamGroup::Frozen;
        p.tensor.set_requires_grad(trainable);
      }
    }
  }
  bool extractor_trainable() const { return extractor_trainable_; }

  // v1 = extractor(x). Batch-norm statistics update only while the
  // extractor itself is trainable (supervised pretraining).
  Tensor features(const Tensor& x, bool training) {
    Tensor h = x;
    const bool bn_train = training && extractor_trainable_;
    for (size_t i = 0; i < blocks_.size(); ++i) {
      h = conv2d(h, blocks_[i].w, cfg_.strides[i], cfg_.kernel / 2);
      h = blocks_[i].bn.forward(h, bn_train);
      h = relu(h);
    }
    return global_avg_pool(h);
  }

  Tensor classify(const Tensor& v1) { return softmax(linear(v1, cls_w_, cls_b_)); }

  Tensor forward(const Tensor& x, bool training) { return classify(features(x, training)); }

  // Fresh classifier head, seeded; used at the start of stage 1.
  void reinit_classifier(uint64_t seed) {
    Rng rng(seed, 0xc1a55);
    const int d = feature_dim();
    const double bound = std::sqrt(6.0 / static_cast<double>(d));
    rng.fill_uniform(std::span<float>(cls_w_.values()), -bound, bound);
    rng.fill_uniform(std::span<float>(cls_b_.values()), -1.0 / std::sqrt(static_cast<double>(d)),
                     1.0 / std::sqrt(static_cast<double>(d)));
  }

  uint64_t extractor_hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& p : reg_.params()) {
      if (p.name.rfind("classifier.", 0) == 0) continue;
      h = fnv1a(p.tensor.values().data(), p.tensor.values().size() * sizeof(float), h);
    }
    return h;
  }

private:
  struct Block {
    Tensor w;
    detail::BatchNormLayer bn;
  };

  void build() {
    Rng rng(cfg_.seed, 0x7eac);
    blocks_.reserve(cfg_.channels.size());
    int in_c = cfg_.in_channels;
    for (size_t i = 0; i < cfg_.channels.size(); ++i) {
      const int out_c = cfg_.channels[i];
      const int fan_in = in_c * cfg_.kernel * cfg_.kernel;
      Block blk;
      const std::string base = "extractor.block" + std::to_string(i);
      blk.w = detail::kaiming_uniform({out_c, in_c, cfg_.kernel, cfg_.kernel}, fan_in, rng);
      blk.bn.init(out_c);
      reg_.add_param(base + ".conv.weight", blk.w, ParamGroup::Frozen);
      reg_.add_param(base + ".bn.gamma", blk.bn.gamma, ParamGroup::Frozen);
      reg_.add_param(base + ".bn.beta", blk.bn.beta, ParamGroup::Frozen);
      blocks_.push_back(std::move(blk));
      in_c = out_c;
    }
    // buffer registration after the block vector is final, so the
    // pointers stay valid
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const std::string base = "extractor.block" + std::to_string(i);
      reg_.add_buffer(base + ".bn.running_mean", &blocks_[i].bn.running_mean,
                      {cfg_.channels[i]});
      reg_.add_buffer(base + ".bn.running_var", &blocks_[i].bn.running_var, {cfg_.channels[i]});
    }
    const int d = feature_dim();
    cls_w_ = reg_.add_param("classifier.weight",
                            detail::kaiming_uniform({cfg_.num_classes, d}, d, rng),
                            ParamGroup::FpClassifier);
    cls_b_ = reg_.add_param("classifier.bias", Tensor::zeros({cfg_.num_classes}),
                            ParamGroup::FpClassifier);
    reinit_classifier(cfg_.seed);
  }

  ConvNetConfig cfg_;
  ParamRegistry reg_;
  std::vector<Block> blocks_;
  Tensor cls_w_, cls_b_;
  bool extractor_trainable_ = false;
};

// Loads extractor weights (and bn statistics) from a checkpoint and
// freezes them; the classifier is freshly initialized from the config
// seed. Classifier tensors in the checkpoint are ignored outright, so a
// supervised head of any width can seed a distillation teacher.
inline FpTeacher build_teacher(const ConvNetConfig& cfg, const Checkpoint& weights) {
  FpTeacher teacher(cfg);
  Checkpoint merged;
  merged.stage = weights.stage;
  for (const auto& t : weights.tensors)
    if (t.name.rfind("classifier.", 0) != 0) merged.tensors.push_back(t);
  Checkpoint self;
  teacher.registry().export_tensors(self, "");
  for (const auto& t : self.tensors)
    if (t.name.rfind("classifier.", 0) == 0) merged.tensors.push_back(t);
  teacher.registry().import_tensors(merged, "");
  teacher.reinit_classifier(cfg.seed);
  teacher.set_extractor_trainable(false);
  return teacher;
}

// ---- binary student -------------------------------------------------------

// Binary conv student: per block rsign(x) -> conv -> bn -> rprelu.
// ActivationsOnly leaves the latent f32 conv weights in the forward pass;
// FullBinary swaps in channel_scale(w) * sign(w).
class BinaryStudent {
public:
  BinaryStudent(ConvNetConfig cfg, BinarizeMode mode, int adapter_out_dim = 0)
      : cfg_(std::move(cfg)), mode_(mode) {
    cfg_.validate();
    if (mode == BinarizeMode::None)
      throw ConfigError("binary student: mode must binarize activations or weights");
    adapter_dim_ = adapter_out_dim > 0 && adapter_out_dim != cfg_.feature_dim() ? adapter_out_dim : 0;
    build();
  }

  const ConvNetConfig& config() const { return cfg_; }
  BinarizeMode mode() const { return mode_; }
  void set_mode(BinarizeMode m) {
    if (m == BinarizeMode::None) throw ConfigError("binary student: cannot disable binarization");
    mode_ = m;
  }
  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }
  int feature_dim() const { return cfg_.feature_dim(); }
  bool has_adapter() const { return adapter_dim_ > 0; }
  int adapter_dim() const { return adapter_dim_ ? adapter_dim_ : cfg_.feature_dim(); }

  // v2 = extractor(x)
  Tensor features(const Tensor& x, bool training) {
    Tensor h = x;
    for (size_t i = 0; i < blocks_.size(); ++i) {
      auto& blk = blocks_[i];
      Tensor act = rsign(h, blk.rsign_beta);
      Tensor w = mode_ == BinarizeMode::FullBinary ? binarize_weight(blk.w) : blk.w;
      h = conv2d(act, w, cfg_.strides[i], cfg_.kernel / 2);
      h = blk.bn.forward(h, training);
      h = rprelu(h, blk.pr_gamma, blk.pr_zeta, blk.pr_slope);
    }
    return global_avg_pool(h);
  }

  // Adapter projection of v2 for the feature-similarity term (identity
  // when teacher and student widths already agree).
  Tensor project_features(const Tensor& v2) {
    if (!has_adapter()) return v2;
    return linear(v2, adapter_w_, adapter_b_);
  }

  Tensor classify(const Tensor& v2) { return softmax(linear(v2, cls_w_, cls_b_)); }

  uint64_t state_hash() const { return reg_.state_hash(); }

private:
  struct Block {
    Tensor rsign_beta;
    Tensor w;
    detail::BatchNormLayer bn;
    Tensor pr_gamma, pr_zeta, pr_slope;
  };

  void build() {
    Rng rng(cfg_.seed, 0xb17);
    blocks_.reserve(cfg_.channels.size());
    int in_c = cfg_.in_channels;
    for (size_t i = 0; i < cfg_.channels.size(); ++i) {
      const int out_c = cfg_.channels[i];
      const int fan_in = in_c * cfg_.kernel * cfg_.kernel;
      Block blk;
      const std::string base = "extractor.block" + std::to_string(i);
      blk.rsign_beta = Tensor::zeros({in_c});
      blk.w = detail::kaiming_uniform({out_c, in_c, cfg_.kernel, cfg_.kernel}, fan_in, rng);
      blk.bn.init(out_c);
      blk.pr_gamma = Tensor::zeros({out_c});
      blk.pr_zeta = Tensor::zeros({out_c});
      blk.pr_slope = Tensor::full({out_c}, 0.25f);
      reg_.add_param(base + ".rsign.beta", blk.rsign_beta, ParamGroup::BinaryExtractor);
      reg_.add_param(base + ".conv.weight", blk.w, ParamGroup::BinaryExtractor);
      reg_.add_param(base + ".bn.gamma", blk.bn.gamma, ParamGroup::BinaryExtractor);
      reg_.add_param(base + ".bn.beta", blk.bn.beta, ParamGroup::BinaryExtractor);
      reg_.add_param(base + ".rprelu.gamma", blk.pr_gamma, ParamGroup::BinaryExtractor);
      reg_.add_param(base + ".rprelu.zeta", blk.pr_zeta, ParamGroup::BinaryExtractor);
      reg_.add_param(base + ".rprelu.slope", blk.pr_slope, ParamGroup::BinaryExtractor);
      blocks_.push_back(std::move(blk));
      in_c = out_c;
    }
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const std::string base = "extractor.block" + std::to_string(i);
      reg_.add_buffer(base + ".bn.running_mean", &blocks_[i].bn.running_mean,
                      {cfg_.channels[i]});
      reg_.add_buffer(base + ".bn.running_var", &blocks_[i].bn.running_var, {cfg_.channels[i]});
    }
    const int d = feature_dim();
    if (adapter_dim_ > 0) {
      adapter_w_ = reg_.add_param("extractor.adapter.weight",
                                  detail::kaiming_uniform({adapter_dim_, d}, d, rng),
                                  ParamGroup::BinaryExtractor);
      adapter_b_ = reg_.add_param("extractor.adapter.bias", Tensor::zeros({adapter_dim_}),
                                  ParamGroup::BinaryExtractor);
    }
    cls_w_ = reg_.add_param("classifier.weight",
                            detail::kaiming_uniform({cfg_.num_classes, d}, d, rng),
                            ParamGroup::BinaryClassifier);
    cls_b_ = reg_.add_param("classifier.bias", Tensor::zeros({cfg_.num_classes}),
                            ParamGroup::BinaryClassifier);
  }

  ConvNetConfig cfg_;
  BinarizeMode mode_;
  int adapter_dim_ = 0;
  ParamRegistry reg_;
  std::vector<Block> blocks_;
  Tensor adapter_w_, adapter_b_, cls_w_, cls_b_;
};

// Builds a student for the given stage mode, optionally initializing every
// tensor from a previous-stage checkpoint (tensor names are identical
// across stages; only forward binarization differs).
inline BinaryStudent make_student(const ConvNetConfig& cfg, BinarizeMode mode,
                                  const Checkpoint* init = nullptr, int adapter_out_dim = 0) {
  BinaryStudent student(cfg, mode, adapter_out_dim);
  if (init) {
    if (mode == BinarizeMode::ActivationsOnly && init->stage == 2)
      throw ContractError("make_student: stage-2 checkpoint cannot seed an activations-only student");
    const std::string prefix = init->find("student.classifier.weight") ? "student." : "";
    student.registry().import_tensors(*init, prefix);
  }
  return student;
}

// ---- paired forward ---------------------------------------------------

template <typename T = float>
struct PairOutput {
  Tensor v1;       // teacher features
  Tensor v2;       // student features (pre-adapter)
  Tensor v2_proj;  // adapter output fed to the feature-similarity term
  Tensor p1;       // teacher softmax
  Tensor p2;       // student softmax
};

// Both networks consume the same augmented view. Gradients reach the FP
// classifier through p1 and the student through v2/p2; the frozen
// extractor receives none.
inline PairOutput<> forward_pair(FpTeacher& teacher, BinaryStudent& student, const Tensor& x,
                                 bool training = true) {
  if (x.ndim() != 4) throw DimensionError("forward_pair: input must be [N,C,H,W]");
  PairOutput<> out;
  out.v1 = teacher.features(x, training);
  out.v2 = student.features(x, training);
  if (teacher.feature_dim() != student.adapter_dim())
    throw DimensionError("forward_pair: teacher width differs from student adapter output");
  out.v2_proj = student.project_features(out.v2);
  out.p1 = teacher.classify(out.v1);
  out.p2 = student.classify(out.v2);
  return out;
}

}  // namespace burnkit
