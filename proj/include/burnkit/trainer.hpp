#pragma once

// End-to-end pretraining loop: sample -> paired forward -> combined
// objective -> backward -> optimizer step, with per-step telemetry and
// stage checkpoints. Stage 1 trains with binarized activations only;
// stage 2 binarizes weights too and starts from the stage-1 tensors,
// including the FP classifier, which is carried over rather than
// reinitialized.
//
// Non-finite losses abort immediately with the offending tensor named;
// nothing is clamped.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "burnkit/checkpoint.hpp"
#include "burnkit/common.hpp"
#include "burnkit/data.hpp"
#include "burnkit/loss.hpp"
#include "burnkit/network.hpp"
#include "burnkit/tensor.hpp"

namespace burnkit {

enum class StageMode { ActivationsOnly, FullBinary };

inline BinarizeMode to_binarize_mode(StageMode s) {
  return s == StageMode::ActivationsOnly ? BinarizeMode::ActivationsOnly
                                         : BinarizeMode::FullBinary;
}

// ---- optimizer -----------------------------------------------------------

enum class OptimKind { SgdMomentum, Adam };
enum class LrDecay { Cosine, Constant };

struct OptimConfig {
  OptimKind kind = OptimKind::SgdMomentum;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double beta1 = 0.9;  // Adam only
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LrDecay decay = LrDecay::Cosine;
};

// One optimizer instance per stage; state slots are matched to parameters
// by index and survive for the stage only.
class Optimizer {
public:
  Optimizer(OptimConfig cfg, int64_t total_steps) : cfg_(cfg), total_steps_(total_steps) {
    if (total_steps < 1) throw ConfigError("optimizer: total steps must be positive");
    if (cfg.lr <= 0.0) throw ConfigError("optimizer: learning rate must be positive");
  }

  double lr_at(int64_t t) const {
    if (cfg_.decay == LrDecay::Constant) return cfg_.lr;
    const double c = std::cos(3.14159265358979323846 * static_cast<double>(t) /
                              static_cast<double>(total_steps_));
    return cfg_.lr * 0.5 * (1.0 + c);
  }

  void step(std::vector<Parameter>& params, int64_t t) {
    const double lr = lr_at(t);
    if (slots_.size() != params.size()) slots_.assign(params.size(), {});
    ++steps_;
    for (size_t i = 0; i < params.size(); ++i) {
      Parameter& p = params[i];
      if (p.group == ParamGroup::Frozen || !p.tensor.requires_grad()) continue;
      if (!p.tensor.has_grad())
        throw ContractError("optimizer: gradient missing for '" + p.name + "'");
      auto& w = p.tensor.values();
      const auto& g = p.tensor.grad_view();
      Slot& s = slots_[i];
      if (s.m.size() != w.size()) {
        s.m.assign(w.size(), 0.0f);
        if (cfg_.kind == OptimKind::Adam) s.v.assign(w.size(), 0.0f);
      }
      if (cfg_.kind == OptimKind::SgdMomentum) {
        for (size_t j = 0; j < w.size(); ++j) {
          const double grad = static_cast<double>(g[j]) +
                              cfg_.weight_decay * static_cast<double>(w[j]);
          const double vel = cfg_.momentum * static_cast<double>(s.m[j]) + grad;
          s.m[j] = static_cast<float>(vel);
          w[j] = static_cast<float>(static_cast<double>(w[j]) - lr * vel);
        }
      } else {
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
        for (size_t j = 0; j < w.size(); ++j) {
          const double grad = static_cast<double>(g[j]) +
                              cfg_.weight_decay * static_cast<double>(w[j]);
          const double m = cfg_.beta1 * static_cast<double>(s.m[j]) + (1.0 - cfg_.beta1) * grad;
          const double v = cfg_.beta2 * static_cast<double>(s.v[j]) +
                           (1.0 - cfg_.beta2) * grad * grad;
          s.m[j] = static_cast<float>(m);
          s.v[j] = static_cast<float>(v);
          const double mhat = m / bc1, vhat = v / bc2;
          w[j] = static_cast<float>(static_cast<double>(w[j]) -
                                    lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps));
        }
      }
    }
  }

private:
  struct Slot {
    std::vector<float> m, v;
  };
  OptimConfig cfg_;
  int64_t total_steps_;
  int64_t steps_ = 0;
  std::vector<Slot> slots_;
};

// ---- config ---------------------------------------------------------------

struct TrainConfig {
  StageMode stage = StageMode::ActivationsOnly;
  int64_t max_iters = 0;  // 0 = derive from epochs
  int epochs = 4;
  int batch_size = 64;
  uint64_t seed = 1;
  OptimConfig optim;
  LambdaSchedule schedule;  // t_max is rewritten to the stage length
  FsVariant fs_variant = FsVariant::Cosine;
  AugmentSpec augment;
  // ablation toggles
  bool use_fs_loss = true;
  bool use_dynamic_lambda = true;
  bool use_multistage = true;
  int64_t checkpoint_every = 0;  // extra mid-stage checkpoints, 0 = stage end only
  std::string checkpoint_dir;   // required when checkpoint_every > 0

  int64_t iters_for(const Dataset& data) const {
    if (max_iters > 0) return max_iters;
    const int64_t steps = (data.count() + batch_size - 1) / batch_size;
    return steps * epochs;
  }

  // Applies the ablation invariants: static lambda forces the constant
  // shape; disabling the feature-similarity term pins lambda(t) = 0.
  LambdaSchedule effective_schedule(int64_t total_iters) const {
    LambdaSchedule s = schedule;
    s.t_max = total_iters > 1 ? total_iters - 1 : 1;  // t covers [0, t_max]
    if (!use_dynamic_lambda) s.shape = LambdaShape::Constant;
    if (!use_fs_loss) {
      s.shape = LambdaShape::Constant;
      s.lambda0 = 0.0;
      s.lambda_tmax = 0.0;
    }
    s.validate();
    return s;
  }
};

// ---- telemetry ------------------------------------------------------------

class TelemetryWriter {
public:
  explicit TelemetryWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot open telemetry CSV: " + path);
    out_ << LossReport::csv_header() << "\n";
    out_.flush();
  }
  void write(const LossReport& r) {
    out_ << r.csv_row() << "\n";
    out_.flush();  // flushed every step so crashes keep the trace
    if (!out_) throw IoError("telemetry write failed");
  }

private:
  std::ofstream out_;
};

// L2 norm of the concatenated gradients per parameter group; call between
// backward and the optimizer step.
struct GradTelemetry {
  double fp_classifier = 0.0;
  double bin_extractor = 0.0;
  double bin_classifier = 0.0;
};

inline GradTelemetry grad_group_norms(const BinaryStudent& student, const FpTeacher& teacher) {
  GradTelemetry t;
  t.fp_classifier = teacher.registry().grad_norm(ParamGroup::FpClassifier);
  t.bin_extractor = student.registry().grad_norm(ParamGroup::BinaryExtractor);
  t.bin_classifier = student.registry().grad_norm(ParamGroup::BinaryClassifier);
  return t;
}

// ---- NaN diagnostics --------------------------------------------------

namespace detail {
// Parameters are scanned before activations: a poisoned weight is the
// root cause even though the forward outputs go non-finite first.
inline std::string first_non_finite(const PairOutput<>& out, const FpTeacher& teacher,
                                    const BinaryStudent& student) {
  auto bad = [](const Tensor& t) { return !all_finite(t); };
  for (const auto& p : teacher.registry().params())
    if (bad(p.tensor)) return "teacher." + p.name;
  for (const auto& p : student.registry().params())
    if (bad(p.tensor)) return "student." + p.name;
  if (bad(out.v1)) return "v1 (teacher features)";
  if (bad(out.v2)) return "v2 (student features)";
  if (bad(out.v2_proj)) return "v2_proj (adapter output)";
  if (bad(out.p1)) return "p1 (teacher softmax)";
  if (bad(out.p2)) return "p2 (student softmax)";
  return "loss_total";
}
}  // namespace detail

// ---- stage loop ----------------------------------------------------------

struct StageResult {
  Checkpoint final_checkpoint;
  std::vector<LossReport> telemetry;
};

// Snapshot of teacher classifier + full student state, tagged with the
// stage. This is the unit of stage handoff and of crash resume.
inline Checkpoint snapshot(const FpTeacher& teacher, const BinaryStudent& student, uint8_t stage,
                           uint64_t iteration, uint64_t seed) {
  Checkpoint ckpt;
  ckpt.stage = stage;
  ckpt.iteration = iteration;
  ckpt.seed = seed;
  Checkpoint teacher_all;
  teacher.registry().export_tensors(teacher_all, "");
  for (auto& t : teacher_all.tensors)
    if (t.name.rfind("classifier.", 0) == 0) {
      ckpt.tensors.push_back(t);
      ckpt.tensors.back().name = "teacher." + ckpt.tensors.back().name;
    }
  student.registry().export_tensors(ckpt, "student.");
  return ckpt;
}

// Runs one pretraining stage. The teacher extractor must already be
// frozen; the student mode must match the configured stage.
inline StageResult train_stage(const TrainConfig& cfg, FpTeacher& teacher, BinaryStudent& student,
                               const Dataset& data, TelemetryWriter* telemetry = nullptr,
                               int stage_tag = 1, int64_t iter_offset = 0) {
  if (teacher.extractor_trainable())
    throw ContractError("train_stage: teacher extractor must be frozen");
  if (student.mode() != to_binarize_mode(cfg.stage))
    throw ContractError("train_stage: student mode does not match the configured stage");

  const int64_t total = cfg.iters_for(data);
  const LambdaSchedule schedule = cfg.effective_schedule(total);
  StageResult result;
  if (total == 0) {
    result.final_checkpoint = snapshot(teacher, student, static_cast<uint8_t>(stage_tag),
                                       static_cast<uint64_t>(iter_offset), cfg.seed);
    return result;
  }

  // one optimizer per network so momentum/Adam slots stay index-aligned
  Optimizer opt_teacher(cfg.optim, total);
  Optimizer opt_student(cfg.optim, total);
  BatchIterator batches(data, cfg.augment, cfg.batch_size, cfg.seed);
  result.telemetry.reserve(static_cast<size_t>(total));

  for (int64_t t = 0; t < total; ++t) {
    Batch batch = batches.next();
    PairOutput<> out = forward_pair(teacher, student, batch.images, /*training=*/true);
    Objective<float> obj =
        burn_objective(out.p1, out.p2, out.v1, out.v2_proj, t, schedule, cfg.fs_variant);
    if (!std::isfinite(obj.report.loss_total)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(iter_offset + t) +
                         "; first offending tensor: " +
                         detail::first_non_finite(out, teacher, student));
    }

    teacher.registry().zero_grad();
    student.registry().zero_grad();
    backward(obj.total);

    GradTelemetry norms = grad_group_norms(student, teacher);
    obj.report.iter = iter_offset + t;
    obj.report.stage = stage_tag;
    obj.report.gnorm_fp_classifier = norms.fp_classifier;
    obj.report.gnorm_bin_extractor = norms.bin_extractor;
    obj.report.gnorm_bin_classifier = norms.bin_classifier;

    opt_teacher.step(teacher.registry().params(), t);
    opt_student.step(student.registry().params(), t);

    if (telemetry) telemetry->write(obj.report);
    result.telemetry.push_back(obj.report);

    if (cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0 && t + 1 < total) {
      if (cfg.checkpoint_dir.empty())
        throw ConfigError("train_stage: checkpoint_every needs checkpoint_dir");
      Checkpoint mid = snapshot(teacher, student, static_cast<uint8_t>(stage_tag),
                                static_cast<uint64_t>(iter_offset + t + 1), cfg.seed);
      save_checkpoint(mid, cfg.checkpoint_dir + "/stage" + std::to_string(stage_tag) + "_iter" +
                               std::to_string(iter_offset + t + 1) + ".bnck");
    }
  }

  result.final_checkpoint = snapshot(teacher, student, static_cast<uint8_t>(stage_tag),
                                     static_cast<uint64_t>(iter_offset + total), cfg.seed);
  return result;
}

// ---- full two-stage run ---------------------------------------------

struct BurnResult {
  Checkpoint stage1;             // empty tensors when multistage is off
  Checkpoint final_checkpoint;   // combined teacher-classifier + student state
  Checkpoint extractor;          // student extractor only (the artifact to keep)
  std::vector<LossReport> telemetry;
};

inline Checkpoint extract_student_extractor(const Checkpoint& full) {
  Checkpoint out;
  out.stage = full.stage;
  out.iteration = full.iteration;
  out.seed = full.seed;
  for (const auto& t : full.tensors)
    if (t.name.rfind("student.extractor.", 0) == 0) {
      out.tensors.push_back(t);
      out.tensors.back().name = t.name.substr(std::string("student.").size());
    }
  return out;
}

// Two-stage pretraining: stage 1 with binarized activations, stage 2 fully
// binarized and initialized from stage 1 (student and FP classifier both).
// With use_multistage = false a single fully-binarized stage runs from
// scratch. Returns the trained extractor checkpoint.
inline BurnResult run_burn(const TrainConfig& stage1_cfg, const TrainConfig& stage2_cfg,
                           FpTeacher& teacher, const ConvNetConfig& student_cfg,
                           const Dataset& data, TelemetryWriter* telemetry = nullptr) {
  if (stage1_cfg.use_multistage != stage2_cfg.use_multistage)
    throw ConfigError("run_burn: inconsistent multistage flags");
  BurnResult result;
  const int adapter_dim = teacher.feature_dim();

  if (!stage1_cfg.use_multistage) {
    TrainConfig cfg = stage2_cfg;
    cfg.stage = StageMode::FullBinary;
    BinaryStudent student = make_student(student_cfg, BinarizeMode::FullBinary, nullptr, adapter_dim);
    StageResult r = train_stage(cfg, teacher, student, data, telemetry, /*stage_tag=*/2);
    result.final_checkpoint = r.final_checkpoint;
    result.telemetry = std::move(r.telemetry);
    result.extractor = extract_student_extractor(result.final_checkpoint);
    return result;
  }

  if (stage1_cfg.stage != StageMode::ActivationsOnly || stage2_cfg.stage != StageMode::FullBinary)
    throw ConfigError("run_burn: stage 1 must binarize activations only, stage 2 everything");

  BinaryStudent s1 = make_student(student_cfg, BinarizeMode::ActivationsOnly, nullptr, adapter_dim);
  StageResult r1 = train_stage(stage1_cfg, teacher, s1, data, telemetry, /*stage_tag=*/1);
  result.stage1 = r1.final_checkpoint;
  result.telemetry = std::move(r1.telemetry);

  // Stage 2: student re-created from the stage-1 checkpoint; the teacher
  // classifier keeps training in place, so its carried tensors are the
  // stage-1 finals by construction.
  BinaryStudent s2 = make_student(student_cfg, BinarizeMode::FullBinary, &result.stage1, adapter_dim);
  StageResult r2 = train_stage(stage2_cfg, teacher, s2, data, telemetry, /*stage_tag=*/2,
                               /*iter_offset=*/static_cast<int64_t>(result.stage1.iteration));
  result.final_checkpoint = r2.final_checkpoint;
  for (auto& row : r2.telemetry) result.telemetry.push_back(row);
  result.extractor = extract_student_extractor(result.final_checkpoint);
  return result;
}

}  // namespace burnkit
