// burnkit command line: dataset tooling, teacher pretraining, two-stage
// binary pretraining, linear evaluation, the EMA divergence simulation and
// the XNOR kernel bench. Every subcommand is deterministic under a fixed
// --seed and writes machine-readable CSV next to a human log line.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric abort.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "burnkit/binary.hpp"
#include "burnkit/checkpoint.hpp"
#include "burnkit/config.hpp"
#include "burnkit/data.hpp"
#include "burnkit/ema_sim.hpp"
#include "burnkit/eval.hpp"
#include "burnkit/network.hpp"
#include "burnkit/pretrain.hpp"
#include "burnkit/trainer.hpp"

namespace {

using namespace burnkit;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

KvConfig load_kv(const std::string& path) {
  return path.empty() ? KvConfig{} : KvConfig::from_file(path);
}

std::string aggregate_path(const std::string& csv_path) {
  const size_t dot = csv_path.rfind('.');
  if (dot == std::string::npos || csv_path.find('/', dot) != std::string::npos)
    return csv_path + ".agg";
  return csv_path.substr(0, dot) + ".agg" + csv_path.substr(dot);
}

// ---- make-dataset -----------------------------------------------------

int cmd_make_dataset(const std::string& out, const std::string& from_dir, int count, int classes,
                     int size, double noise, uint64_t seed) {
  Dataset ds;
  if (!from_dir.empty()) {
    ds = ingest_image_folder(from_dir, size);
  } else {
    ds = make_synthetic_dataset(count, size, static_cast<uint16_t>(classes), seed,
                                static_cast<float>(noise));
  }
  save_dataset(ds, out);
  std::cout << "wrote " << out << ": " << ds.count() << " images, " << ds.channels << "x"
            << ds.height << "x" << ds.width << ", " << ds.num_classes << " classes\n";
  std::cout << "path,count,channels,height,width,classes\n"
            << out << "," << ds.count() << "," << ds.channels << "," << ds.height << ","
            << ds.width << "," << ds.num_classes << "\n";
  return kExitOk;
}

// ---- pretrain-teacher ------------------------------------------------

int cmd_pretrain_teacher(const std::string& data_path, const std::string& out,
                         const std::string& config_path, const std::string& metrics_path,
                         int epochs, uint64_t seed) {
  KvConfig kv = load_kv(config_path);
  kv.set("seed", std::to_string(seed));
  Dataset data = load_dataset(data_path);
  kv.set("classes", std::to_string(data.num_classes));
  kv.set("image_size", std::to_string(data.height));
  RunConfig rc = build_run_config(kv);

  FpTeacher teacher(rc.teacher);
  TeacherPretrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.batch_size = rc.stage1.batch_size;
  cfg.optim.lr = rc.stage1.optim.lr;
  cfg.augment = rc.stage1.augment;

  auto metrics = pretrain_teacher(teacher, data, cfg);

  const std::string mpath = metrics_path.empty() ? out + ".metrics.csv" : metrics_path;
  std::ofstream mf(mpath, std::ios::trunc);
  if (!mf) throw IoError("cannot open metrics CSV: " + mpath);
  mf << TeacherEpochMetric::csv_header() << "\n";
  for (const auto& m : metrics) {
    mf << m.csv_row() << "\n";
    std::cout << "epoch " << m.epoch << ": loss " << fmt_g(m.mean_loss) << ", train top-1 "
              << fmt_g(m.train_top1) << "\n";
  }

  Checkpoint ckpt;
  ckpt.seed = seed;
  ckpt.iteration = static_cast<uint64_t>(metrics.size());
  teacher.registry().export_tensors(ckpt, "");
  save_checkpoint(ckpt, out);
  std::cout << "wrote " << out << " (hash " << hex64(checkpoint_hash(ckpt)) << ")\n";
  return kExitOk;
}

// ---- burn ----------------------------------------------------------------

int cmd_burn(const std::string& data_path, const std::string& teacher_path,
             const std::string& out_dir, const std::string& config_path,
             const std::vector<std::string>& ablate, int64_t seed_override) {
  KvConfig kv = load_kv(config_path);
  Dataset data = load_dataset(data_path);
  // `classes` is the distillation softmax width (default 100); it is
  // independent of the dataset's label count, which pretraining ignores.
  kv.set("image_size", std::to_string(data.height));
  if (seed_override >= 0) kv.set("seed", std::to_string(seed_override));
  for (const auto& flag : ablate) {
    if (flag == "no-fs")
      kv.set("use_fs_loss", "false");
    else if (flag == "no-dyn")
      kv.set("use_dynamic_lambda", "false");
    else if (flag == "no-mst")
      kv.set("use_multistage", "false");
    else
      throw ConfigError("unknown --ablate value: " + flag + " (expected no-fs|no-dyn|no-mst)");
  }
  RunConfig rc = build_run_config(kv);

  std::filesystem::create_directories(out_dir);
  Checkpoint teacher_ckpt = load_checkpoint(teacher_path);
  FpTeacher teacher = build_teacher(rc.teacher, teacher_ckpt);

  rc.stage1.checkpoint_dir = out_dir;
  rc.stage2.checkpoint_dir = out_dir;
  TelemetryWriter telemetry(out_dir + "/telemetry.csv");
  BurnResult result = run_burn(rc.stage1, rc.stage2, teacher, rc.student, data, &telemetry);

  if (!result.stage1.tensors.empty()) {
    save_checkpoint(result.stage1, out_dir + "/stage1.bnck");
    std::cout << "stage 1 done: " << result.stage1.iteration << " iterations\n";
  }
  save_checkpoint(result.final_checkpoint, out_dir + "/final.bnck");
  save_checkpoint(result.extractor, out_dir + "/extractor.bnck");
  std::cout << "stage 2 done: " << result.final_checkpoint.iteration
            << " total iterations, final loss "
            << (result.telemetry.empty() ? std::string("n/a")
                                         : fmt_g(result.telemetry.back().loss_total))
            << "\n";
  std::cout << "final checkpoint hash " << hex64(checkpoint_hash(result.final_checkpoint))
            << "\n";
  return kExitOk;
}

// ---- eval-linear -----------------------------------------------------

int cmd_eval_linear(const std::string& data_path, const std::string& extractor_path,
                    const std::string& out_csv, const std::string& eval_data_path,
                    const std::string& config_path, const std::string& method, int epochs,
                    double lr, uint64_t seed) {
  KvConfig kv = load_kv(config_path);
  Dataset train = load_dataset(data_path);
  kv.set("classes", std::to_string(train.num_classes));
  kv.set("image_size", std::to_string(train.height));
  RunConfig rc = build_run_config(kv);

  Dataset held;
  if (!eval_data_path.empty()) {
    held = load_dataset(eval_data_path);
  } else {
    // deterministic 80/20 split of the single input file
    const int n_train = train.count() * 4 / 5;
    held.channels = train.channels;
    held.height = train.height;
    held.width = train.width;
    held.num_classes = train.num_classes;
    const size_t img = train.image_size();
    held.images.assign(train.images.begin() + static_cast<int64_t>(n_train) * img,
                       train.images.end());
    held.labels.assign(train.labels.begin() + n_train, train.labels.end());
    train.images.resize(static_cast<size_t>(n_train) * img);
    train.labels.resize(static_cast<size_t>(n_train));
  }
  if (train.count() == 0 || held.count() == 0)
    throw ConfigError("eval-linear: empty train or held-out split");

  Checkpoint ckpt = load_checkpoint(extractor_path);
  const BinarizeMode mode =
      ckpt.stage == 1 ? BinarizeMode::ActivationsOnly : BinarizeMode::FullBinary;
  const bool has_adapter = ckpt.find("extractor.adapter.weight") != nullptr ||
                           ckpt.find("student.extractor.adapter.weight") != nullptr;
  BinaryStudent student(rc.student, mode, has_adapter ? rc.teacher.feature_dim() : 0);
  const std::string prefix = ckpt.find("student.extractor.block0.conv.weight") ? "student." : "";
  student.registry().import_tensors(ckpt, prefix, "extractor.");

  ProbeConfig pcfg;
  pcfg.epochs = epochs;
  pcfg.lr = lr;
  pcfg.seed = seed;
  ProbeResult res = linear_probe(student, train, held, rc.stage1.augment, pcfg);

  std::ofstream f(out_csv, std::ios::trunc);
  if (!f) throw IoError("cannot open results CSV: " + out_csv);
  f << "run_id,pretrain_method,probe_lr,top1\n";
  f << hex64(seed) << "," << method << "," << fmt_g(lr) << "," << fmt_g(res.top1) << "\n";
  std::cout << "top-1 " << fmt_g(res.top1) << " (" << method << ", probe lr " << fmt_g(lr)
            << ", extractor unchanged: "
            << (res.extractor_hash_before == res.extractor_hash_after ? "yes" : "NO") << ")\n";
  return kExitOk;
}

// ---- ema-sim -----------------------------------------------------------

int cmd_ema_sim(const std::string& mode_str, const std::string& out_csv, int dim, double eta,
                double tau, int iters, int runs, uint64_t seed) {
  EmaSimConfig cfg;
  if (mode_str == "fp")
    cfg.mode = EmaMode::FP;
  else if (mode_str == "binary")
    cfg.mode = EmaMode::Binary;
  else
    throw ConfigError("ema-sim: --mode must be fp or binary");
  cfg.dim = dim;
  cfg.eta = static_cast<float>(eta);
  cfg.tau = static_cast<float>(tau);
  cfg.iters = iters;
  cfg.runs = runs;
  cfg.seed = seed;

  EmaTrace trace = run_sim(cfg);
  const std::string agg = aggregate_path(out_csv);
  write_trace_csv(trace, cfg.mode, out_csv, agg);
  std::cout << mode_str << ": final distance " << fmt_g(trace.final_mean()) << " +- "
            << fmt_g(trace.final_stdev()) << " over " << runs << " runs (" << out_csv << ", "
            << agg << ")\n";
  return kExitOk;
}

// ---- xnor-bench ----------------------------------------------------------

int cmd_xnor_bench(int m, int k, int n, int trials) {
  if (m < 1 || k < 1 || n < 1) throw ConfigError("xnor-bench: m, k, n must be positive");
  if (trials < 1) throw ConfigError("xnor-bench: trials must be positive");
  Rng rng(7, 0xbe7c);
  std::vector<float> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
  for (auto& v : a) v = rng.bernoulli(0.5) ? 1.0f : -1.0f;
  for (auto& v : b) v = rng.bernoulli(0.5) ? 1.0f : -1.0f;

  const auto t0 = std::chrono::steady_clock::now();
  PackedMatrix pa = pack_signs(a, m, k);
  PackedMatrix pb = pack_signs(b, k, n);
  std::vector<int32_t> fast;
  for (int t = 0; t < trials; ++t) fast = xnor_gemm(pa, pb);
  const auto t1 = std::chrono::steady_clock::now();

  Tensor ta = Tensor::from({m, k}, a);
  Tensor tb = Tensor::from({k, n}, b);
  Tensor ref;
  {
    NoGradGuard ng;
    for (int t = 0; t < trials; ++t) ref = matmul(ta, tb);
  }
  const auto t2 = std::chrono::steady_clock::now();

  bool exact = true;
  for (size_t i = 0; i < fast.size(); ++i)
    if (static_cast<float>(fast[i]) != ref.values()[i]) exact = false;

  const double ops = 2.0 * m * k * static_cast<double>(n) * trials;
  const double packed_s = std::chrono::duration<double>(t1 - t0).count();
  const double float_s = std::chrono::duration<double>(t2 - t1).count();
  const double packed_gops = ops / std::max(packed_s, 1e-9) / 1e9;
  const double float_gops = ops / std::max(float_s, 1e-9) / 1e9;

  std::cout << "exact: " << (exact ? "true" : "false") << "\n";
  std::cout << "m,k,n,exact,packed_gops,float_gops\n";
  std::cout << m << "," << k << "," << n << "," << (exact ? "true" : "false") << ","
            << fmt_g(packed_gops) << "," << fmt_g(float_gops) << "\n";
  return exact ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binary-network self-supervised pretraining toolkit"};
  app.require_subcommand(1);

  // make-dataset
  auto* mkds = app.add_subcommand("make-dataset", "generate or convert a BDS1 dataset");
  std::string mk_out, mk_from_dir;
  int mk_count = 2000, mk_classes = 10, mk_size = 32;
  double mk_noise = 0.3;
  uint64_t mk_seed = 1;
  mkds->add_option("--out", mk_out, "output .bds path")->required();
  mkds->add_option("--from-dir", mk_from_dir, "ingest a folder of per-class ppm/pgm images");
  mkds->add_option("--count", mk_count, "synthetic image count");
  mkds->add_option("--classes", mk_classes, "synthetic class count (2..10)");
  mkds->add_option("--size", mk_size, "image side length");
  mkds->add_option("--noise", mk_noise, "synthetic pixel noise");
  mkds->add_option("--seed", mk_seed, "generator seed");

  // pretrain-teacher
  auto* pt = app.add_subcommand("pretrain-teacher", "supervised-train the FP teacher extractor");
  std::string pt_data, pt_out, pt_config, pt_metrics;
  int pt_epochs = 10;
  uint64_t pt_seed = 1;
  pt->add_option("--data", pt_data, "training dataset (.bds)")->required();
  pt->add_option("--out", pt_out, "output checkpoint (.bnck)")->required();
  pt->add_option("--config", pt_config, "key=value config file");
  pt->add_option("--metrics", pt_metrics, "per-epoch CSV (default: OUT.metrics.csv)");
  pt->add_option("--epochs", pt_epochs, "training epochs");
  pt->add_option("--seed", pt_seed, "seed");

  // burn
  auto* burn = app.add_subcommand("burn", "two-stage self-supervised pretraining");
  std::string b_data, b_teacher, b_out, b_config;
  std::vector<std::string> b_ablate;
  int64_t b_seed = -1;
  burn->add_option("--data", b_data, "training dataset (.bds)")->required();
  burn->add_option("--teacher", b_teacher, "teacher checkpoint (.bnck)")->required();
  burn->add_option("--out", b_out, "output directory")->required();
  burn->add_option("--config", b_config, "key=value config file");
  burn->add_option("--ablate", b_ablate, "disable components: no-fs no-dyn no-mst");
  burn->add_option("--seed", b_seed, "seed override");

  // eval-linear
  auto* ev = app.add_subcommand("eval-linear", "linear probe on a frozen extractor");
  std::string e_data, e_extractor, e_out, e_eval_data, e_config, e_method = "pretrained";
  int e_epochs = 40;
  double e_lr = 0.3;
  uint64_t e_seed = 1;
  ev->add_option("--data", e_data, "probe training dataset (.bds)")->required();
  ev->add_option("--extractor", e_extractor, "extractor checkpoint (.bnck)")->required();
  ev->add_option("--out", e_out, "results CSV")->required();
  ev->add_option("--eval-data", e_eval_data, "held-out dataset (default: 20% tail split)");
  ev->add_option("--config", e_config, "key=value config file");
  ev->add_option("--method", e_method, "label written to the results CSV");
  ev->add_option("--epochs", e_epochs, "probe epochs");
  ev->add_option("--lr", e_lr, "probe learning rate");
  ev->add_option("--seed", e_seed, "seed");

  // ema-sim
  auto* ema = app.add_subcommand("ema-sim", "backbone/EMA-target divergence toy simulation");
  std::string s_mode, s_out;
  int s_dim = 100, s_iters = 100, s_runs = 10;
  double s_eta = 4.8, s_tau = 0.99;
  uint64_t s_seed = 1;
  ema->add_option("--mode", s_mode, "fp or binary")->required();
  ema->add_option("--out", s_out, "per-run CSV (aggregate lands next to it)")->required();
  ema->add_option("--dim", s_dim, "vector dimension");
  ema->add_option("--eta", s_eta, "backbone step size");
  ema->add_option("--tau", s_tau, "EMA momentum");
  ema->add_option("--iters", s_iters, "iterations");
  ema->add_option("--runs", s_runs, "independent runs");
  ema->add_option("--seed", s_seed, "seed");

  // xnor-bench
  auto* xb = app.add_subcommand("xnor-bench", "XNOR-popcount GEMM exactness and throughput");
  int x_m = 0, x_k = 0, x_n = 0, x_trials = 5;
  xb->add_option("--m", x_m, "rows of A")->required();
  xb->add_option("--k", x_k, "inner dimension")->required();
  xb->add_option("--n", x_n, "columns of B")->required();
  xb->add_option("--trials", x_trials, "timing repetitions");

  try {
    app.parse(argc, argv);
    if (mkds->parsed())
      return cmd_make_dataset(mk_out, mk_from_dir, mk_count, mk_classes, mk_size, mk_noise,
                              mk_seed);
    if (pt->parsed())
      return cmd_pretrain_teacher(pt_data, pt_out, pt_config, pt_metrics, pt_epochs, pt_seed);
    if (burn->parsed()) return cmd_burn(b_data, b_teacher, b_out, b_config, b_ablate, b_seed);
    if (ev->parsed())
      return cmd_eval_linear(e_data, e_extractor, e_out, e_eval_data, e_config, e_method,
                             e_epochs, e_lr, e_seed);
    if (ema->parsed()) return cmd_ema_sim(s_mode, s_out, s_dim, s_eta, s_tau, s_iters, s_runs, s_seed);
    if (xb->parsed()) return cmd_xnor_bench(x_m, x_k, x_n, x_trials);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
