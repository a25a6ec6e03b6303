#pragma once

// Flat UTF-8 key=value configuration files. '#' starts a comment, blank
// lines are skipped, keys are unique. CLI overrides are applied on top of
// the file, so flags always win.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "burnkit/common.hpp"
#include "burnkit/loss.hpp"
#include "burnkit/network.hpp"
#include "burnkit/trainer.hpp"

namespace burnkit {

class KvConfig {
public:
  KvConfig() = default;

  static KvConfig from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    KvConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const size_t b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      const size_t e = line.find_last_not_of(" \t\r");
      line = line.substr(b, e - b + 1);
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  int64_t get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t pos = 0;
      int64_t v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("config key '" + key + "': not an integer: " + it->second);
    }
  }
  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("config key '" + key + "': not a number: " + it->second);
    }
  }
  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false: " + it->second);
  }
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        out.push_back(std::stoi(trim(tok)));
      } catch (...) {
        throw ConfigError("config key '" + key + "': bad integer list: " + it->second);
      }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
  }

private:
  static std::string trim(std::string s) {
    const size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  std::map<std::string, std::string> values_;
};

// ---- typed views over the key set ---------------------------------------
//
// Documented keys (all optional; defaults in parentheses):
//   seed (1), batch_size (64), classes (10), image_size (32)
//   teacher_channels (16,32,32,128), teacher_strides (2,2,1,2)
//   student_channels (16,32,32,64),  student_strides (2,2,1,2)
//   epochs (8, split evenly), stage1_epochs, stage2_epochs
//   optimizer (sgd|adam, sgd), lr (0.05), momentum (0.9)
//   weight_decay_stage1 (1e-5), weight_decay_stage2 (0), lr_decay (cosine|constant)
//   adam_beta1 (0.9), adam_beta2 (0.999)
//   lambda0 (0.9), lambda_tmax (0.7), lambda_shape (cosine|constant|step)
//   fs_variant (cosine|l1|l2)
//   use_fs_loss (true), use_dynamic_lambda (true), use_multistage (true)
//   crop_pad (2), flip_prob (0.5), checkpoint_every (0)

inline FsVariant parse_fs_variant(const std::string& s) {
  if (s == "cosine") return FsVariant::Cosine;
  if (s == "l1") return FsVariant::L1;
  if (s == "l2") return FsVariant::L2;
  throw ConfigError("unknown fs_variant: " + s);
}

inline LambdaShape parse_lambda_shape(const std::string& s) {
  if (s == "cosine") return LambdaShape::CosineAnneal;
  if (s == "constant") return LambdaShape::Constant;
  if (s == "step") return LambdaShape::HeavisideStep;
  throw ConfigError("unknown lambda_shape: " + s);
}

inline OptimKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimKind::SgdMomentum;
  if (s == "adam") return OptimKind::Adam;
  throw ConfigError("unknown optimizer: " + s);
}

inline LrDecay parse_lr_decay(const std::string& s) {
  if (s == "cosine") return LrDecay::Cosine;
  if (s == "constant") return LrDecay::Constant;
  throw ConfigError("unknown lr_decay: " + s);
}

struct RunConfig {
  ConvNetConfig teacher;
  ConvNetConfig student;
  TrainConfig stage1;
  TrainConfig stage2;
};

inline RunConfig build_run_config(const KvConfig& kv) {
  RunConfig rc;
  const uint64_t seed = static_cast<uint64_t>(kv.get_int("seed", 1));
  const int classes = static_cast<int>(kv.get_int("classes", 10));
  const int image_size = static_cast<int>(kv.get_int("image_size", 32));

  rc.teacher.num_classes = classes;
  rc.teacher.image_size = image_size;
  rc.teacher.seed = seed;
  rc.teacher.channels = kv.get_int_list("teacher_channels", {16, 32, 32, 128});
  rc.teacher.strides = kv.get_int_list("teacher_strides", {2, 2, 1, 2});
  rc.teacher.validate();

  rc.student.num_classes = classes;
  rc.student.image_size = image_size;
  rc.student.seed = seed;
  rc.student.channels = kv.get_int_list("student_channels", {16, 32, 32, 64});
  rc.student.strides = kv.get_int_list("student_strides", {2, 2, 1, 2});
  rc.student.validate();

  const int epochs_total = static_cast<int>(kv.get_int("epochs", 8));
  // even split unless overridden per stage
  const int s1_default = (epochs_total + 1) / 2;
  const int s2_default = epochs_total - s1_default;

  TrainConfig base;
  base.batch_size = static_cast<int>(kv.get_int("batch_size", 64));
  base.seed = seed;
  base.optim.kind = parse_optimizer(kv.get_string("optimizer", "sgd"));
  base.optim.lr = kv.get_double("lr", 0.05);
  base.optim.momentum = kv.get_double("momentum", 0.9);
  base.optim.beta1 = kv.get_double("adam_beta1", 0.9);
  base.optim.beta2 = kv.get_double("adam_beta2", 0.999);
  base.optim.decay = parse_lr_decay(kv.get_string("lr_decay", "cosine"));
  base.schedule.lambda0 = kv.get_double("lambda0", 0.9);
  base.schedule.lambda_tmax = kv.get_double("lambda_tmax", 0.7);
  base.schedule.shape = parse_lambda_shape(kv.get_string("lambda_shape", "cosine"));
  base.fs_variant = parse_fs_variant(kv.get_string("fs_variant", "cosine"));
  base.use_fs_loss = kv.get_bool("use_fs_loss", true);
  base.use_dynamic_lambda = kv.get_bool("use_dynamic_lambda", true);
  base.use_multistage = kv.get_bool("use_multistage", true);
  base.augment.crop_pad = static_cast<int>(kv.get_int("crop_pad", 2));
  base.augment.flip_prob = static_cast<float>(kv.get_double("flip_prob", 0.5));
  base.augment.mean = {0.5f, 0.5f, 0.5f};
  base.augment.stdev = {0.25f, 0.25f, 0.25f};
  base.checkpoint_every = kv.get_int("checkpoint_every", 0);

  rc.stage1 = base;
  rc.stage1.stage = StageMode::ActivationsOnly;
  rc.stage1.epochs = static_cast<int>(kv.get_int("stage1_epochs", s1_default));
  rc.stage1.optim.weight_decay = kv.get_double("weight_decay_stage1", 1e-5);

  rc.stage2 = base;
  rc.stage2.stage = StageMode::FullBinary;
  rc.stage2.epochs = static_cast<int>(kv.get_int("stage2_epochs", s2_default));
  rc.stage2.optim.weight_decay = kv.get_double("weight_decay_stage2", 0.0);

  if (!base.use_multistage) {
    // single fully-binarized stage runs the whole budget
    rc.stage2.epochs = static_cast<int>(
        kv.get_int("stage2_epochs", static_cast<int64_t>(epochs_total)));
  }
  return rc;
}

}  // namespace burnkit
