#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "detadvprop/checkpoint.hpp"
#include "detadvprop/image_io.hpp"
#include "detadvprop/parallel.hpp"
#include "detadvprop/rng.hpp"
#include "detadvprop/tensor.hpp"

namespace detadv {

enum class CorruptionKind {
  kGaussianNoise,
  kShotNoise,
  kImpulseNoise,
  kDefocusBlur,
  kMotionBlur,
  kBrightness,
  kContrast,
  kPixelate,
};

inline const std::vector<CorruptionKind>& all_corruption_kinds() {
  static const std::vector<CorruptionKind> kinds = {
      CorruptionKind::kGaussianNoise, CorruptionKind::kShotNoise,
      CorruptionKind::kImpulseNoise,  CorruptionKind::kDefocusBlur,
      CorruptionKind::kMotionBlur,    CorruptionKind::kBrightness,
      CorruptionKind::kContrast,      CorruptionKind::kPixelate};
  return kinds;
}

inline const char* to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::kGaussianNoise: return "gaussian_noise";
    case CorruptionKind::kShotNoise: return "shot_noise";
    case CorruptionKind::kImpulseNoise: return "impulse_noise";
    case CorruptionKind::kDefocusBlur: return "defocus_blur";
    case CorruptionKind::kMotionBlur: return "motion_blur";
    case CorruptionKind::kBrightness: return "brightness";
    case CorruptionKind::kContrast: return "contrast";
    default: return "pixelate";
  }
}

inline CorruptionKind corruption_kind_from_string(const std::string& s) {
  for (CorruptionKind k : all_corruption_kinds())
    if (s == to_string(k)) return k;
  throw ConfigError("unknown corruption kind '" + s + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 1;

  void validate() const {
    DETADV_CONFIG_CHECK(severity >= 1 && severity <= 5, "corruption severity must be in 1..5");
  }
};

// Severity-indexed parameter tables. The tables are the assertable part of
// severity monotonicity: each one is strictly monotone in its documented
// direction. Exact COCO-C constants target 0-255 images; these ramps are
// scaled to visibly degrade the toy detector on [-1, 1] inputs.
namespace severity_tables {
constexpr std::array<double, 5> kGaussianSigma = {0.04, 0.06, 0.09, 0.13, 0.19};
constexpr std::array<double, 5> kShotPhotons = {60.0, 25.0, 12.0, 5.0, 3.0};  // decreasing
constexpr std::array<double, 5> kImpulseProb = {0.01, 0.02, 0.04, 0.07, 0.11};
constexpr std::array<int, 5> kDefocusRadius = {1, 2, 3, 4, 6};
constexpr std::array<int, 5> kMotionLength = {3, 5, 7, 9, 13};
constexpr std::array<double, 5> kBrightnessShift = {0.2, 0.4, 0.6, 0.8, 1.0};
constexpr std::array<double, 5> kContrastFactor = {0.60, 0.45, 0.33, 0.22, 0.12};  // decreasing
constexpr std::array<int, 5> kPixelateBlock = {2, 3, 4, 6, 8};
}  // namespace severity_tables

// The raw severity knob for a kind (sigma, photon count, probability, ...).
inline double severity_parameter(CorruptionKind kind, int severity) {
  const int i = severity - 1;
  switch (kind) {
    case CorruptionKind::kGaussianNoise: return severity_tables::kGaussianSigma[i];
    case CorruptionKind::kShotNoise: return severity_tables::kShotPhotons[i];
    case CorruptionKind::kImpulseNoise: return severity_tables::kImpulseProb[i];
    case CorruptionKind::kDefocusBlur: return severity_tables::kDefocusRadius[i];
    case CorruptionKind::kMotionBlur: return severity_tables::kMotionLength[i];
    case CorruptionKind::kBrightness: return severity_tables::kBrightnessShift[i];
    case CorruptionKind::kContrast: return severity_tables::kContrastFactor[i];
    default: return severity_tables::kPixelateBlock[i];
  }
}

namespace corrupt_detail {

inline void add_gaussian_noise(Tensor* image, double sigma, Rng& rng) {
  for (std::size_t i = 0; i < image->size(); ++i) (*image)[i] += sigma * rng.normal();
}

inline void apply_shot_noise(Tensor* image, double photons, Rng& rng) {
  for (std::size_t i = 0; i < image->size(); ++i) {
    const double x01 = std::clamp(0.5 * ((*image)[i] + 1.0), 0.0, 1.0);
    (*image)[i] = 2.0 * (static_cast<double>(rng.poisson(x01 * photons)) / photons) - 1.0;
  }
}

inline void apply_impulse_noise(Tensor* image, double prob, Rng& rng) {
  const int h = image->dim(1), w = image->dim(2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (rng.uniform() >= prob) continue;
      const double v = rng.uniform() < 0.5 ? -1.0 : 1.0;
      for (int c = 0; c < 3; ++c)
        (*image)[(static_cast<std::size_t>(c) * h + y) * w + x] = v;
    }
}

inline void apply_brightness(Tensor* image, double shift) {
  for (std::size_t i = 0; i < image->size(); ++i) (*image)[i] += shift;
}

// Scales each channel's deviation from its mean.
inline void apply_contrast(Tensor* image, double factor) {
  const int h = image->dim(1), w = image->dim(2);
  for (int c = 0; c < 3; ++c) {
    double* plane = image->data() + static_cast<std::size_t>(c) * h * w;
    double mean = 0.0;
    for (int i = 0; i < h * w; ++i) mean += plane[i];
    mean /= h * w;
    for (int i = 0; i < h * w; ++i) plane[i] = mean + factor * (plane[i] - mean);
  }
}

inline void apply_pixelate(Tensor* image, int block) {
  const int h = image->dim(1), w = image->dim(2);
  for (int c = 0; c < 3; ++c) {
    double* plane = image->data() + static_cast<std::size_t>(c) * h * w;
    for (int by = 0; by < h; by += block)
      for (int bx = 0; bx < w; bx += block) {
        const int ey = std::min(by + block, h), ex = std::min(bx + block, w);
        double mean = 0.0;
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) mean += plane[y * w + x];
        mean /= (ey - by) * (ex - bx);
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) plane[y * w + x] = mean;
      }
  }
}

inline Tensor convolve_kernel(const Tensor& image, const std::vector<double>& kernel, int ksize) {
  const int h = image.dim(1), w = image.dim(2);
  const int rad = ksize / 2;
  Tensor out({3, h, w});
  for (int c = 0; c < 3; ++c) {
    const double* src = image.data() + static_cast<std::size_t>(c) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(c) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int ky = 0; ky < ksize; ++ky)
          for (int kx = 0; kx < ksize; ++kx) {
            const double kv = kernel[ky * ksize + kx];
            if (kv == 0.0) continue;
            const int sy = std::clamp(y + ky - rad, 0, h - 1);
            const int sx = std::clamp(x + kx - rad, 0, w - 1);
            acc += kv * src[sy * w + sx];
          }
        dst[y * w + x] = acc;
      }
  }
  return out;
}

inline std::vector<double> disk_kernel(int radius, int* ksize) {
  const int size = 2 * radius + 1;
  std::vector<double> kernel(static_cast<std::size_t>(size) * size, 0.0);
  double total = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - radius, dx = x - radius;
      if (dy * dy + dx * dx <= radius * radius + 0.25) {
        kernel[y * size + x] = 1.0;
        total += 1.0;
      }
    }
  for (double& v : kernel) v /= total;
  *ksize = size;
  return kernel;
}

// Length-L line kernel rotated by `angle`, bilinearly splatted.
inline std::vector<double> motion_kernel(int length, double angle, int* ksize) {
  const int size = length | 1;  // odd
  std::vector<double> kernel(static_cast<std::size_t>(size) * size, 0.0);
  const double cy = size / 2, cx = size / 2;
  const double dy = std::sin(angle), dx = std::cos(angle);
  double total = 0.0;
  for (int i = 0; i < length; ++i) {
    const double t = i - (length - 1) / 2.0;
    const double y = cy + t * dy, x = cx + t * dx;
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    const double wts[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    for (int k = 0; k < 4; ++k) {
      if (ys[k] < 0 || ys[k] >= size || xs[k] < 0 || xs[k] >= size) continue;
      kernel[ys[k] * size + xs[k]] += wts[k];
      total += wts[k];
    }
  }
  for (double& v : kernel) v /= total;
  *ksize = size;
  return kernel;
}

}  // namespace corrupt_detail

// [OP] corrupt_image — apply one corruption at the given severity; stochastic
// kinds are deterministic given the seed; output clipped to [-1, 1].
inline Tensor corrupt_image(const Tensor& image, const CorruptionSpec& spec,
                            std::uint64_t rng_seed) {
  spec.validate();
  DETADV_CHECK(image.rank() == 3 && image.dim(0) == 3, "corrupt_image: expected [3, H, W]");
  Rng rng(rng_seed);
  Tensor out = image;

  const double param = severity_parameter(spec.kind, spec.severity);
  switch (spec.kind) {
    case CorruptionKind::kGaussianNoise:
      corrupt_detail::add_gaussian_noise(&out, param, rng);
      break;
    case CorruptionKind::kShotNoise:
      corrupt_detail::apply_shot_noise(&out, param, rng);
      break;
    case CorruptionKind::kImpulseNoise:
      corrupt_detail::apply_impulse_noise(&out, param, rng);
      break;
    case CorruptionKind::kDefocusBlur: {
      int ksize = 0;
      const auto kernel = corrupt_detail::disk_kernel(static_cast<int>(param), &ksize);
      out = corrupt_detail::convolve_kernel(image, kernel, ksize);
      break;
    }
    case CorruptionKind::kMotionBlur: {
      int ksize = 0;
      const double angle = rng.uniform(0.0, 3.141592653589793);
      const auto kernel = corrupt_detail::motion_kernel(static_cast<int>(param), angle, &ksize);
      out = corrupt_detail::convolve_kernel(image, kernel, ksize);
      break;
    }
    case CorruptionKind::kBrightness:
      corrupt_detail::apply_brightness(&out, param);
      break;
    case CorruptionKind::kContrast:
      corrupt_detail::apply_contrast(&out, param);
      break;
    case CorruptionKind::kPixelate:
      corrupt_detail::apply_pixelate(&out, static_cast<int>(param));
      break;
  }

  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], -1.0, 1.0);
  return out;
}

// Per-variant image seed so partial grid rebuilds reproduce bit-identically.
inline std::uint64_t corruption_image_seed(std::uint64_t seed, CorruptionKind kind, int severity,
                                           int image_id) {
  return hash_combine(
      hash_combine(hash_combine(seed, label_hash(to_string(kind))), static_cast<std::uint64_t>(severity)),
      static_cast<std::uint64_t>(image_id));
}

// [OP] build_corruption_grid — one corrupted copy of the validation split per
// (kind, severity). Corruption is label-preserving, so every variant carries
// a byte-identical copy of the clean annotation index.
inline std::string build_corruption_grid(const std::string& data_dir,
                                         const std::vector<CorruptionKind>& kinds,
                                         const std::vector<int>& severities, std::uint64_t seed,
                                         const std::string& out_dir, bool overwrite = false) {
  namespace fs = std::filesystem;
  DETADV_CHECK(fs::exists(data_dir + "/index.json"), "dataset index not found under '", data_dir,
               "'");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir))
    DETADV_CONFIG_CHECK(overwrite, "output path '", out_dir,
                        "' is not empty; pass overwrite to replace it");
  fs::create_directories(out_dir);

  const std::string index_text = read_text_file(data_dir + "/index.json");
  const json index = json::parse(index_text);
  const std::vector<int> val_ids = index.at("split").at("val").get<std::vector<int>>();

  struct Entry {
    int id;
    std::string file;
  };
  std::vector<Entry> val_entries;
  for (const json& im : index.at("images")) {
    const int id = im.at("id").get<int>();
    if (std::find(val_ids.begin(), val_ids.end(), id) != val_ids.end())
      val_entries.push_back({id, im.at("file").get<std::string>()});
  }

  json variants = json::array();
  for (CorruptionKind kind : kinds) {
    for (int severity : severities) {
      CorruptionSpec spec{kind, severity};
      spec.validate();
      const std::string rel = std::string(to_string(kind)) + "_s" + std::to_string(severity);
      const std::string vdir = out_dir + "/" + rel;
      fs::create_directories(vdir);
      parallel_for(val_entries.size(), [&](std::size_t i) {
        const Entry& e = val_entries[i];
        Tensor image = read_ppm(data_dir + "/" + e.file);
        Tensor corrupted = corrupt_image(image, spec, corruption_image_seed(seed, kind, severity,
                                                                            e.id));
        write_ppm(vdir + "/" + e.file, corrupted);
      });
      write_text_file(vdir + "/index.json", index_text);
      variants.push_back(json{{"kind", to_string(kind)}, {"severity", severity}, {"path", rel}});
    }
  }

  json manifest{{"clean", data_dir}, {"variants", variants}};
  write_text_file(out_dir + "/grid_manifest.json", manifest.dump(2) + "\n");
  return out_dir;
}

}  // namespace detadv
