#pragma once

#include <cmath>
#include <vector>

#include "detadvprop/boxes.hpp"
#include "detadvprop/config.hpp"

namespace detadv {

// Anchors for one feature level, ordered per cell row-major and per
// (scale, ratio) within a cell. The flat ordering must match the channel
// layout of the prediction heads, which emit anchors_per_cell * K (or * 4)
// channels per cell.
struct AnchorLevel {
  int stride = 0;
  int grid_h = 0;
  int grid_w = 0;
  std::vector<Box> boxes;  // grid_h * grid_w * anchors_per_cell
};

struct AnchorSet {
  std::vector<AnchorLevel> levels;
  std::vector<Box> flat;  // concatenation of all level boxes, level-major

  int total() const { return static_cast<int>(flat.size()); }
};

inline AnchorSet generate_anchors(const DetectorConfig& config, int image_h, int image_w) {
  config.validate();
  AnchorSet set;
  for (int stride : config.level_strides()) {
    DETADV_CONFIG_CHECK(image_h % stride == 0 && image_w % stride == 0,
                        "image size ", image_h, "x", image_w,
                        " not divisible by anchor stride ", stride);
    AnchorLevel level;
    level.stride = stride;
    level.grid_h = image_h / stride;
    level.grid_w = image_w / stride;
    level.boxes.reserve(static_cast<std::size_t>(level.grid_h) * level.grid_w *
                        config.anchors_per_cell());
    for (int gy = 0; gy < level.grid_h; ++gy) {
      for (int gx = 0; gx < level.grid_w; ++gx) {
        const double cy = (gy + 0.5) * stride;
        const double cx = (gx + 0.5) * stride;
        for (double scale : config.anchor_scales) {
          for (double ratio : config.anchor_ratios) {
            const double size = config.anchor_base * stride * scale;
            const double h = size * std::sqrt(ratio);
            const double w = size / std::sqrt(ratio);
            level.boxes.push_back(Box{cy - 0.5 * h, cx - 0.5 * w, cy + 0.5 * h, cx + 0.5 * w});
          }
        }
      }
    }
    set.flat.insert(set.flat.end(), level.boxes.begin(), level.boxes.end());
    set.levels.push_back(std::move(level));
  }
  return set;
}

// Per-anchor classification and regression targets.
// class_target: -2 = ignore, -1 = background, 0..K-1 = positive with class.
// box_target: (dy/h_a, dx/w_a, log(h/h_a), log(w/w_a)) against the matched
// ground-truth box; zero for non-positive anchors.
struct AnchorTargets {
  std::vector<int> class_target;
  std::vector<std::array<double, 4>> box_target;
  int num_classes = 0;
  bool adversarial = false;  // set by make_targeted_labels

  std::size_t size() const { return class_target.size(); }
  int positives() const {
    int n = 0;
    for (int c : class_target) n += (c >= 0);
    return n;
  }
};

constexpr int kTargetIgnore = -2;
constexpr int kTargetBackground = -1;

inline std::array<double, 4> encode_box(const Box& anchor, const Box& gt) {
  const double ah = anchor.height(), aw = anchor.width();
  return {(gt.center_y() - anchor.center_y()) / ah,
          (gt.center_x() - anchor.center_x()) / aw,
          std::log(gt.height() / ah),
          std::log(gt.width() / aw)};
}

inline Box decode_box(const Box& anchor, const std::array<double, 4>& t) {
  const double ah = anchor.height(), aw = anchor.width();
  const double cy = anchor.center_y() + t[0] * ah;
  const double cx = anchor.center_x() + t[1] * aw;
  const double h = ah * std::exp(t[2]);
  const double w = aw * std::exp(t[3]);
  return Box{cy - 0.5 * h, cx - 0.5 * w, cy + 0.5 * h, cx + 0.5 * w};
}

// RetinaNet-style IoU assignment with a force-match rule: each ground-truth
// box claims its highest-IoU anchor even when that IoU is below pos_thr.
inline AnchorTargets assign_targets(const AnchorSet& anchors, const Annotation& ann,
                                    int num_classes, double pos_thr, double neg_thr) {
  DETADV_CHECK(anchors.total() > 0, "assign_targets: empty anchor set");
  DETADV_CONFIG_CHECK(0 <= neg_thr && neg_thr <= pos_thr && pos_thr <= 1,
                      "assign_targets: require 0 <= neg_thr <= pos_thr <= 1");
  const int num_anchors = anchors.total();
  AnchorTargets targets;
  targets.num_classes = num_classes;
  targets.class_target.assign(num_anchors, kTargetBackground);
  targets.box_target.assign(num_anchors, {0.0, 0.0, 0.0, 0.0});
  if (ann.empty()) return targets;

  const int num_gt = static_cast<int>(ann.size());
  std::vector<int> best_gt(num_anchors, -1);
  std::vector<double> best_iou(num_anchors, 0.0);
  std::vector<int> gt_best_anchor(num_gt, -1);
  std::vector<double> gt_best_iou(num_gt, -1.0);

  for (int a = 0; a < num_anchors; ++a) {
    for (int g = 0; g < num_gt; ++g) {
      const double v = iou(anchors.flat[a], ann.boxes[g]);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = g;
      }
      if (v > gt_best_iou[g]) {
        gt_best_iou[g] = v;
        gt_best_anchor[g] = a;
      }
    }
  }

  for (int a = 0; a < num_anchors; ++a) {
    if (best_gt[a] >= 0 && best_iou[a] >= pos_thr) {
      targets.class_target[a] = ann.classes[best_gt[a]];
      targets.box_target[a] = encode_box(anchors.flat[a], ann.boxes[best_gt[a]]);
    } else if (best_iou[a] >= neg_thr) {
      targets.class_target[a] = kTargetIgnore;
    }
  }

  // Force-match pass; a later ground truth wins if two share a best anchor.
  for (int g = 0; g < num_gt; ++g) {
    const int a = gt_best_anchor[g];
    if (a < 0) continue;
    targets.class_target[a] = ann.classes[g];
    targets.box_target[a] = encode_box(anchors.flat[a], ann.boxes[g]);
  }
  return targets;
}

}  // namespace detadv
