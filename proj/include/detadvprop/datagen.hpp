#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "detadvprop/boxes.hpp"
#include "detadvprop/checkpoint.hpp"
#include "detadvprop/config.hpp"
#include "detadvprop/image_io.hpp"
#include "detadvprop/rng.hpp"
#include "detadvprop/tensor.hpp"

namespace detadv {

struct Scene {
  Tensor image;  // [3, H, W]
  Annotation ann;
  int regenerations = 0;  // whole-scene reseeds after placement failures
};

namespace scenegen {

// Bold per-class colors spread around the hue circle, jittered per object.
inline std::array<double, 3> class_color(int cls, int num_classes, Rng& rng) {
  const double h = 2.0 * 3.141592653589793 * cls / std::max(1, num_classes);
  std::array<double, 3> rgb{0.75 * std::cos(h), 0.75 * std::cos(h - 2.0943951023931953),
                            0.75 * std::cos(h - 4.1887902047863905)};
  for (double& v : rgb) v = std::clamp(v + rng.uniform(-0.08, 0.08), -0.9, 0.9);
  return rgb;
}

struct ShapeGeom {
  std::string kind;
  double cy, cx, size;   // bounding-square side
  double angle = 0.0;    // triangles only
  Box bbox;

  // Vertices of the (rotated) triangle inscribed in the size-square.
  std::array<std::array<double, 2>, 3> tri_vertices() const {
    std::array<std::array<double, 2>, 3> v;
    const double r = 0.5 * size;
    for (int i = 0; i < 3; ++i) {
      const double a = angle + 2.0943951023931953 * i - 1.5707963267948966;
      v[i] = {cy + r * std::sin(a), cx + r * std::cos(a)};
    }
    return v;
  }

  bool contains(double y, double x) const {
    if (kind == "circle") {
      const double r = 0.5 * size;
      return (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;
    }
    if (kind == "square") {
      const double r = 0.5 * size;
      return std::abs(y - cy) <= r && std::abs(x - cx) <= r;
    }
    const auto v = tri_vertices();
    double prev = 0.0;
    for (int i = 0; i < 3; ++i) {
      const auto& a = v[i];
      const auto& b = v[(i + 1) % 3];
      const double cross = (b[0] - a[0]) * (x - a[1]) - (b[1] - a[1]) * (y - a[0]);
      if (i == 0)
        prev = cross;
      else if (cross * prev < 0)
        return false;
    }
    return true;
  }

  void compute_bbox() {
    if (kind == "triangle") {
      const auto v = tri_vertices();
      bbox = Box{std::min({v[0][0], v[1][0], v[2][0]}), std::min({v[0][1], v[1][1], v[2][1]}),
                 std::max({v[0][0], v[1][0], v[2][0]}), std::max({v[0][1], v[1][1], v[2][1]})};
    } else {
      const double r = 0.5 * size;
      bbox = Box{cy - r, cx - r, cy + r, cx + r};
    }
  }
};

// 4x4 supersampled coverage of the shape over one pixel.
inline double pixel_coverage(const ShapeGeom& shape, int y, int x) {
  int hits = 0;
  for (int sy = 0; sy < 4; ++sy)
    for (int sx = 0; sx < 4; ++sx)
      if (shape.contains(y + (sy + 0.5) / 4.0, x + (sx + 0.5) / 4.0)) ++hits;
  return hits / 16.0;
}

inline void render_background(Tensor* image, const SceneSpec& spec, Rng& rng) {
  const int h = image->dim(1), w = image->dim(2);
  for (int c = 0; c < 3; ++c) {
    const double base = rng.uniform(-spec.bg_level, spec.bg_level);
    const double grad_y = rng.uniform(-spec.bg_level, spec.bg_level);
    const double grad_x = rng.uniform(-spec.bg_level, spec.bg_level);
    double* plane = image->data() + static_cast<std::size_t>(c) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        plane[y * w + x] = std::clamp(base + grad_y * (y / static_cast<double>(h) - 0.5) +
                                          grad_x * (x / static_cast<double>(w) - 0.5) +
                                          rng.uniform(-spec.bg_noise, spec.bg_noise),
                                      -1.0, 1.0);
  }
}

inline void render_shape(Tensor* image, const ShapeGeom& shape, const std::array<double, 3>& rgb) {
  const int h = image->dim(1), w = image->dim(2);
  const int y0 = std::max(0, static_cast<int>(std::floor(shape.bbox.ymin)) - 1);
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(shape.bbox.ymax)) + 1);
  const int x0 = std::max(0, static_cast<int>(std::floor(shape.bbox.xmin)) - 1);
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(shape.bbox.xmax)) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double cov = pixel_coverage(shape, y, x);
      if (cov <= 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        double& px = (*image)[(static_cast<std::size_t>(c) * h + y) * w + x];
        px = std::clamp((1.0 - cov) * px + cov * rgb[c], -1.0, 1.0);
      }
    }
}

}  // namespace scenegen

// [OP] generate_scene — deterministic scene: textured background plus
// anti-aliased shapes with tight boxes. Unplaceable layouts regenerate the
// whole scene from a derived seed; the count is reported for the metadata.
inline Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int hw = spec.image_size;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::uint64_t scene_seed = attempt == 0 ? seed : subseed(seed, "regen", attempt);
    Rng rng(scene_seed);
    Scene scene;
    scene.regenerations = attempt;
    scene.image = Tensor({3, hw, hw});
    scenegen::render_background(&scene.image, spec, rng);

    const int n = spec.objects_min +
                  static_cast<int>(rng.uniform_int(spec.objects_max - spec.objects_min + 1));
    bool failed = false;
    for (int obj = 0; obj < n && !failed; ++obj) {
      const int cls = static_cast<int>(rng.uniform_int(spec.num_classes()));
      bool placed = false;
      for (int retry = 0; retry < spec.place_retries; ++retry) {
        scenegen::ShapeGeom shape;
        shape.kind = spec.catalog[cls];
        shape.size = rng.uniform(spec.size_min, spec.size_max);
        const double margin = 0.5 * shape.size;
        shape.cy = rng.uniform(margin, hw - margin);
        shape.cx = rng.uniform(margin, hw - margin);
        if (shape.kind == "triangle") shape.angle = rng.uniform(0.0, 6.283185307179586);
        shape.compute_bbox();
        Box clipped = shape.bbox.clipped(hw, hw);
        if (clipped.area() < 4.0) continue;
        bool overlaps = false;
        for (const Box& other : scene.ann.boxes)
          if (iou(clipped, other) > spec.max_overlap_iou) {
            overlaps = true;
            break;
          }
        if (overlaps) continue;
        Rng color_rng(subseed(scene_seed, "color", obj));
        scenegen::render_shape(&scene.image, shape, scenegen::class_color(cls, spec.num_classes(),
                                                                          color_rng));
        scene.ann.boxes.push_back(clipped);
        scene.ann.classes.push_back(cls);
        placed = true;
        break;
      }
      if (!placed) failed = true;
    }
    if (!failed) {
      scene.ann.validate(hw, hw, spec.num_classes());
      return scene;
    }
  }
  throw RuntimeError("generate_scene: layout infeasible after 64 reseeds; loosen the scene spec");
}

// [OP] generate_dataset — images as lossless PPM files plus one JSON
// annotation index with a deterministic train/val split.
inline std::string generate_dataset(const SceneSpec& spec, int n_images, std::uint64_t seed,
                                    const std::string& out_path, bool overwrite = false) {
  DETADV_CONFIG_CHECK(n_images >= 1, "generate_dataset: n_images must be >= 1");
  spec.validate();
  namespace fs = std::filesystem;
  if (fs::exists(out_path) && !fs::is_empty(out_path))
    DETADV_CONFIG_CHECK(overwrite, "output path '", out_path,
                        "' is not empty; pass overwrite to replace it");
  fs::create_directories(out_path);

  json images = json::array();
  json regenerated = json::array();
  for (int id = 0; id < n_images; ++id) {
    Scene scene = generate_scene(spec, subseed(seed, "scene", id));
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.ppm", id);
    write_ppm(out_path + "/" + name, scene.image);
    json anns = json::array();
    for (std::size_t i = 0; i < scene.ann.boxes.size(); ++i) {
      const Box& b = scene.ann.boxes[i];
      anns.push_back(json{{"bbox", {b.ymin, b.xmin, b.ymax, b.xmax}},
                          {"class", scene.ann.classes[i]}});
    }
    images.push_back(json{{"id", id},
                          {"file", name},
                          {"width", spec.image_size},
                          {"height", spec.image_size},
                          {"annotations", anns}});
    if (scene.regenerations > 0)
      regenerated.push_back(json{{"id", id}, {"count", scene.regenerations}});
  }

  // Seeded split; ids are sorted within each side.
  std::vector<int> ids(n_images);
  for (int i = 0; i < n_images; ++i) ids[i] = i;
  Rng split_rng(subseed(seed, "split"));
  for (int i = n_images - 1; i > 0; --i) {
    const int j = static_cast<int>(split_rng.uniform_int(i + 1));
    std::swap(ids[i], ids[j]);
  }
  const int n_val = static_cast<int>(std::lround(spec.val_fraction * n_images));
  std::vector<int> val(ids.begin(), ids.begin() + n_val);
  std::vector<int> train(ids.begin() + n_val, ids.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());

  json index{{"images", images},
             {"classes", spec.catalog},
             {"split", {{"train", train}, {"val", val}}},
             {"regenerated", regenerated}};
  write_text_file(out_path + "/index.json", index.dump(2) + "\n");
  return out_path;
}

}  // namespace detadv
