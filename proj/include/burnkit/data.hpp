#pragma once

// BDS1 dataset container, augmentation and batching.
//
// File layout (little-endian): magic "BDS1", count u32, channels u32,
// height u32, width u32, then `count` images as f32 CHW arrays, then
// `count` labels as u16, then the declared class count as one trailing u16.
// Labels are stored even for self-supervised pretraining; the probe uses
// them, the pretrainer ignores them.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "burnkit/common.hpp"
#include "burnkit/rng.hpp"
#include "burnkit/tensor.hpp"

namespace burnkit {

struct Dataset {
  int channels = 0;
  int height = 0;
  int width = 0;
  uint16_t num_classes = 0;
  std::vector<float> images;  // count * C*H*W, CHW per image
  std::vector<uint16_t> labels;

  int count() const { return static_cast<int>(labels.size()); }
  size_t image_size() const {
    return static_cast<size_t>(channels) * height * width;
  }
  const float* image(int i) const { return images.data() + static_cast<size_t>(i) * image_size(); }
};

inline std::string serialize(const Dataset& ds) {
  std::string out;
  out += "BDS1";
  put_le(out, static_cast<uint32_t>(ds.count()));
  put_le(out, static_cast<uint32_t>(ds.channels));
  put_le(out, static_cast<uint32_t>(ds.height));
  put_le(out, static_cast<uint32_t>(ds.width));
  for (float v : ds.images) put_le(out, v);
  for (uint16_t l : ds.labels) put_le(out, l);
  put_le(out, ds.num_classes);
  return out;
}

inline Dataset deserialize_dataset(const std::string& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  if (r.bytes(4, "magic") != "BDS1") throw FormatError("dataset: bad magic, expected BDS1");
  Dataset ds;
  const uint32_t count = r.u32("count");
  ds.channels = static_cast<int>(r.u32("channels"));
  ds.height = static_cast<int>(r.u32("height"));
  ds.width = static_cast<int>(r.u32("width"));
  if (count > 0 && (ds.channels < 1 || ds.height < 1 || ds.width < 1))
    throw FormatError("dataset: non-positive image dimensions");
  const size_t img = static_cast<size_t>(ds.channels) * ds.height * ds.width;
  const size_t expect = 20 + static_cast<size_t>(count) * (img * 4 + 2) + 2;
  if (bytes.size() != expect)
    throw FormatError("dataset: file length " + std::to_string(bytes.size()) +
                      " but header declares " + std::to_string(expect) + " bytes");
  ds.images.resize(static_cast<size_t>(count) * img);
  for (auto& v : ds.images) v = r.f32("image data");
  ds.labels.resize(count);
  for (auto& l : ds.labels) l = r.u16("label");
  ds.num_classes = r.u16("class count");
  for (uint16_t l : ds.labels)
    if (l >= ds.num_classes)
      throw FormatError("dataset: label " + std::to_string(l) + " >= declared class count " +
                        std::to_string(ds.num_classes));
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::string bytes = serialize(ds);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open dataset for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to dataset: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open dataset: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_dataset(bytes);
}

// ---- augmentation / batching ---------------------------------------------

struct AugmentSpec {
  int crop_pad = 0;        // zero-pad then random-crop back to H x W
  float flip_prob = 0.0f;  // horizontal mirror probability
  std::vector<float> mean; // per-channel, empty = no normalization
  std::vector<float> stdev;

  void validate(int channels) const {
    if (crop_pad < 0) throw ConfigError("augment: crop_pad must be >= 0");
    if (flip_prob < 0.0f || flip_prob > 1.0f)
      throw ConfigError("augment: flip probability must lie in [0,1]");
    if (!mean.empty() && (mean.size() != static_cast<size_t>(channels) ||
                          stdev.size() != static_cast<size_t>(channels)))
      throw ConfigError("augment: normalization vectors must match channel count");
  }
};

struct Batch {
  Tensor images;                 // [B,C,H,W]
  std::vector<uint16_t> labels;  // B
};

// Seeded epoch iterator. Each epoch reshuffles with (seed, epoch); every
// sample appears exactly once per epoch and the teacher/student consume
// one shared augmented view per sample. The last partial batch is emitted.
class BatchIterator {
public:
  BatchIterator(const Dataset& ds, AugmentSpec aug, int batch_size, uint64_t seed)
      : ds_(&ds), aug_(std::move(aug)), batch_(batch_size), seed_(seed) {
    if (batch_size < 1) throw ContractError("batch size must be >= 1");
    if (ds.count() == 0) throw ContractError("cannot iterate an empty dataset");
    aug_.validate(ds.channels);
    order_.resize(static_cast<size_t>(ds.count()));
    start_epoch(0);
  }

  int64_t epoch() const { return epoch_; }
  int steps_per_epoch() const {
    return (ds_->count() + batch_ - 1) / batch_;
  }

  Batch next() {
    if (cursor_ >= static_cast<int>(order_.size())) start_epoch(epoch_ + 1);
    const int b = std::min<int>(batch_, static_cast<int>(order_.size()) - cursor_);
    const int c = ds_->channels, h = ds_->height, w = ds_->width;
    Batch out;
    out.images = Tensor::zeros({b, c, h, w});
    out.labels.resize(static_cast<size_t>(b));
    float* dst = out.images.values().data();
    const size_t img = ds_->image_size();
    for (int i = 0; i < b; ++i) {
      const int idx = order_[static_cast<size_t>(cursor_ + i)];
      out.labels[static_cast<size_t>(i)] = ds_->labels[static_cast<size_t>(idx)];
      augment_into(ds_->image(idx), dst + static_cast<size_t>(i) * img);
    }
    cursor_ += b;
    return out;
  }

private:
  void start_epoch(int64_t e) {
    epoch_ = e;
    cursor_ = 0;
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    Rng rng(seed_, 0x5a5a0000u + static_cast<uint64_t>(e));
    rng.shuffle(std::span<int>(order_));
    aug_rng_ = Rng(seed_, 0xa5a50000u + static_cast<uint64_t>(e));
  }

  void augment_into(const float* src, float* dst) {
    const int c = ds_->channels, h = ds_->height, w = ds_->width;
    const int pad = aug_.crop_pad;
    int off_y = 0, off_x = 0;
    bool flip = false;
    if (pad > 0) {
      off_y = static_cast<int>(aug_rng_.uniform_int(2 * pad + 1)) - pad;
      off_x = static_cast<int>(aug_rng_.uniform_int(2 * pad + 1)) - pad;
    }
    if (aug_.flip_prob > 0.0f) flip = aug_rng_.bernoulli(aug_.flip_prob);
    for (int ch = 0; ch < c; ++ch) {
      const float m = aug_.mean.empty() ? 0.0f : aug_.mean[static_cast<size_t>(ch)];
      const float s = aug_.mean.empty() ? 1.0f : aug_.stdev[static_cast<size_t>(ch)];
      const float inv = 1.0f / s;
      for (int y = 0; y < h; ++y) {
        const int sy = y + off_y;
        for (int x = 0; x < w; ++x) {
          const int sx0 = flip ? (w - 1 - x) : x;
          const int sx = sx0 + off_x;
          float v = 0.0f;  // zero padding outside the source
          if (sy >= 0 && sy < h && sx >= 0 && sx < w)
            v = src[(static_cast<size_t>(ch) * h + sy) * w + sx];
          dst[(static_cast<size_t>(ch) * h + y) * w + x] = (v - m) * inv;
        }
      }
    }
  }

  const Dataset* ds_;
  AugmentSpec aug_;
  int batch_;
  uint64_t seed_;
  int64_t epoch_ = 0;
  int cursor_ = 0;
  std::vector<int> order_;
  Rng aug_rng_{0};
};

// ---- synthetic desk-scale dataset ------------------------------------------

// Ten high-contrast spatial pattern families (gratings, checkerboards,
// rings, half planes, blobs) with per-sample phase jitter and pixel noise.
// Patterns are near-binary by construction so they survive sign
// binarization of the input activations.
inline Dataset make_synthetic_dataset(int count, int image_size, uint16_t num_classes,
                                      uint64_t seed, float noise = 0.3f) {
  if (count < 0 || image_size < 8) throw ConfigError("synthetic dataset: bad count/size");
  if (num_classes < 2 || num_classes > 10)
    throw ConfigError("synthetic dataset: class count must be in [2,10]");
  Dataset ds;
  ds.channels = 3;
  ds.height = image_size;
  ds.width = image_size;
  ds.num_classes = num_classes;
  ds.images.resize(static_cast<size_t>(count) * ds.image_size());
  ds.labels.resize(static_cast<size_t>(count));
  Rng rng(seed, 0xda7a);
  const float pi = 3.14159265358979323846f;
  for (int i = 0; i < count; ++i) {
    const uint16_t label = static_cast<uint16_t>(rng.uniform_int(num_classes));
    ds.labels[static_cast<size_t>(i)] = label;
    float* img = ds.images.data() + static_cast<size_t>(i) * ds.image_size();
    const float phase = static_cast<float>(rng.uniform(0.0, 2.0 * pi));
    const float jx = static_cast<float>(rng.uniform(-3.0, 3.0));
    const float jy = static_cast<float>(rng.uniform(-3.0, 3.0));
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x) {
        const float u = static_cast<float>(x) + jx;
        const float v = static_cast<float>(y) + jy;
        float p = 0.0f;
        switch (label) {
          case 0: p = std::sin(u * 0.6f + phase); break;                      // vertical grating
          case 1: p = std::sin(v * 0.6f + phase); break;                      // horizontal grating
          case 2: p = std::sin((u + v) * 0.45f + phase); break;               // diagonal grating
          case 3: p = std::sin((u - v) * 0.45f + phase); break;               // anti-diagonal
          case 4: p = std::sin(u * 1.3f + phase) * std::sin(v * 1.3f); break; // checkerboard
          case 5: {                                                           // rings
            const float cx = u - image_size / 2.0f, cy = v - image_size / 2.0f;
            p = std::sin(std::sqrt(cx * cx + cy * cy) * 0.8f + phase);
            break;
          }
          case 6: p = (u > image_size / 2.0f + jx) ? 1.0f : -1.0f; break;     // half plane x
          case 7: p = (v > image_size / 2.0f + jy) ? 1.0f : -1.0f; break;     // half plane y
          case 8: {                                                           // center blob
            const float cx = u - image_size / 2.0f, cy = v - image_size / 2.0f;
            p = (cx * cx + cy * cy < image_size * image_size / 10.0f) ? 1.0f : -1.0f;
            break;
          }
          default: p = std::sin(u * 0.25f + phase) * std::sin(v * 0.25f + phase) > 0 ? 1.0f : -1.0f;
        }
        // harden the sinusoids toward +/-1, then add noise
        p = p > 0.0f ? 1.0f : -1.0f;
        for (int ch = 0; ch < 3; ++ch) {
          const float n = static_cast<float>(rng.normal()) * noise;
          // channel 0 carries the pattern, 1 the inverse, 2 mostly noise
          const float base = ch == 0 ? p : (ch == 1 ? -p : 0.3f * p);
          img[(static_cast<size_t>(ch) * image_size + y) * image_size + x] =
              0.5f + 0.25f * (base + n);
        }
      }
  }
  return ds;
}

// ---- raw image folder converter --------------------------------------------

namespace detail {
inline int ppm_token(std::istream& in) {
  // skips whitespace and '#' comments
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      int v = 0;
      bool any = false;
      while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        any = true;
        c = in.get();
      }
      if (!any) throw FormatError("ppm: expected integer token");
      return v;
    }
  }
  throw FormatError("ppm: unexpected end of header");
}
}  // namespace detail

// Reads a binary PPM (P6) or PGM (P5) into [0,1] CHW floats.
inline void load_ppm(const std::string& path, int channels, int height, int width, float* dst) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  const bool gray = (m1 == '5');
  if (m0 != 'P' || (m1 != '6' && m1 != '5')) throw FormatError("unsupported image magic in " + path);
  const int w = detail::ppm_token(f), h = detail::ppm_token(f), maxv = detail::ppm_token(f);
  if (w != width || h != height) throw FormatError("image size mismatch in " + path);
  if (maxv <= 0 || maxv > 255) throw FormatError("unsupported sample depth in " + path);
  const int in_ch = gray ? 1 : 3;
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * in_ch);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw FormatError("truncated pixel data in " + path);
  for (int ch = 0; ch < channels; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int src_ch = std::min(ch, in_ch - 1);
        const unsigned char v = raw[(static_cast<size_t>(y) * w + x) * in_ch + src_ch];
        dst[(static_cast<size_t>(ch) * h + y) * w + x] =
            static_cast<float>(v) / static_cast<float>(maxv);
      }
}

// Ingests a folder of per-class subdirectories of .ppm/.pgm files:
// root/<class_name>/*.ppm. Classes are sorted by name; files sorted within.
inline Dataset ingest_image_folder(const std::string& root, int image_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root);
  std::vector<std::string> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw FormatError("no class subdirectories under " + root);
  if (class_dirs.size() > 0xffff) throw FormatError("too many classes under " + root);

  Dataset ds;
  ds.channels = 3;
  ds.height = image_size;
  ds.width = image_size;
  ds.num_classes = static_cast<uint16_t>(class_dirs.size());
  for (size_t cls = 0; cls < class_dirs.size(); ++cls) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(class_dirs[cls])) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const size_t off = ds.images.size();
      ds.images.resize(off + ds.image_size());
      load_ppm(f, ds.channels, ds.height, ds.width, ds.images.data() + off);
      ds.labels.push_back(static_cast<uint16_t>(cls));
    }
  }
  if (ds.labels.empty()) throw FormatError("no .ppm/.pgm images under " + root);
  return ds;
}

}  // namespace burnkit
