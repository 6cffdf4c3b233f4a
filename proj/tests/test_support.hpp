#pragma once

#include "detadvprop/anchors.hpp"
#include "detadvprop/config.hpp"
#include "detadvprop/detector.hpp"
#include "detadvprop/rng.hpp"
#include "detadvprop/tensor.hpp"

namespace testsupport {

using namespace detadv;

// Standard two-level config on 64x64 inputs: strides {8,16}, 3x3 anchors per
// cell, 720 anchors total.
inline DetectorConfig standard_config(int bn_branches = 1) {
  DetectorConfig cfg;
  cfg.bn_branches = bn_branches;
  return cfg;
}

// Single-stage toy used for gradient checks: 1-channel 4x4 inputs, stride-2
// level with a 2x2 grid.
inline DetectorConfig toy_config(int bn_branches = 1, int num_classes = 2) {
  DetectorConfig cfg;
  cfg.num_classes = num_classes;
  cfg.in_channels = 1;
  cfg.width = 4;
  cfg.num_stages = 1;
  cfg.levels = {0};
  cfg.head_depth = 1;
  cfg.anchor_scales = {1.0};
  cfg.anchor_ratios = {1.0};
  cfg.bn_branches = bn_branches;
  return cfg;
}

inline Tensor random_images(int batch, int channels, int h, int w, std::uint64_t seed,
                            double amplitude = 0.9) {
  Tensor t({batch, channels, h, w});
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-amplitude, amplitude);
  return t;
}

// Hand-built targets with a few positive anchors per image.
inline std::vector<AnchorTargets> random_targets(int batch, int num_anchors, int num_classes,
                                                 std::uint64_t seed, double positive_rate = 0.05,
                                                 double ignore_rate = 0.02) {
  Rng rng(seed);
  std::vector<AnchorTargets> out(batch);
  for (int b = 0; b < batch; ++b) {
    out[b].num_classes = num_classes;
    out[b].class_target.assign(num_anchors, kTargetBackground);
    out[b].box_target.assign(num_anchors, {0, 0, 0, 0});
    for (int a = 0; a < num_anchors; ++a) {
      const double u = rng.uniform();
      if (u < positive_rate) {
        out[b].class_target[a] = static_cast<int>(rng.uniform_int(num_classes));
        for (int k = 0; k < 4; ++k) out[b].box_target[a][k] = rng.uniform(-0.5, 0.5);
      } else if (u < positive_rate + ignore_rate) {
        out[b].class_target[a] = kTargetIgnore;
      }
    }
  }
  return out;
}

}  // namespace testsupport
