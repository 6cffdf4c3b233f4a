#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "detadvprop/common.hpp"

namespace detadv {

// Architecture + loss settings for the tiny single-stage detector.
// The backbone is a chain of stride-2 conv/BN/ReLU stages; the stages listed
// in `levels` feed a pair of shared prediction heads.
struct DetectorConfig {
  int num_classes = 3;
  int in_channels = 3;
  int width = 8;        // channels of stage 0; later stages use width*{2,4,4,...}
  int depth = 0;        // extra stride-1 conv blocks per stage
  int num_stages = 4;
  std::vector<int> levels = {2, 3};  // stage indices that emit predictions
  int head_depth = 1;

  std::vector<double> anchor_scales = {1.0, 1.2599210498948732, 1.5874010519681994};
  std::vector<double> anchor_ratios = {0.5, 1.0, 2.0};  // ratio = h/w
  double anchor_base = 2.0;  // anchor size = anchor_base * stride * scale

  double loss_weight_w = 1.0;  // L_det = L_cls + w * L_loc
  double focal_alpha = 0.25;
  double focal_gamma = 1.5;
  double huber_delta = 0.1;
  double pos_iou = 0.5;
  double neg_iou = 0.4;

  int bn_branches = 1;  // 1 = vanilla, 2 = main+aux, 3 = main+aux_cls+aux_loc
  double bn_epsilon = 1e-3;
  double bn_decay = 0.99;

  int stage_channels(int stage) const {
    const int mult = stage == 0 ? 1 : (stage == 1 ? 2 : 4);
    return width * mult;
  }
  int head_channels() const { return stage_channels(levels.back()); }
  int stride_of_stage(int stage) const { return 1 << (stage + 1); }
  std::vector<int> level_strides() const {
    std::vector<int> s;
    for (int l : levels) s.push_back(stride_of_stage(l));
    return s;
  }
  int max_stride() const { return stride_of_stage(levels.back()); }
  int anchors_per_cell() const {
    return static_cast<int>(anchor_scales.size() * anchor_ratios.size());
  }

  void validate() const {
    DETADV_CONFIG_CHECK(num_classes >= 1, "detector.num_classes must be >= 1");
    DETADV_CONFIG_CHECK(in_channels >= 1, "detector.in_channels must be >= 1");
    DETADV_CONFIG_CHECK(width >= 1, "detector.width must be >= 1");
    DETADV_CONFIG_CHECK(depth >= 0, "detector.depth must be >= 0");
    DETADV_CONFIG_CHECK(num_stages >= 1, "detector.num_stages must be >= 1");
    DETADV_CONFIG_CHECK(head_depth >= 0, "detector.head_depth must be >= 0");
    DETADV_CONFIG_CHECK(!levels.empty(), "detector.levels must not be empty");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      DETADV_CONFIG_CHECK(levels[i] >= 0 && levels[i] < num_stages,
                          "detector.levels entry out of range");
      if (i > 0) DETADV_CONFIG_CHECK(levels[i] > levels[i - 1], "detector.levels must increase");
      DETADV_CONFIG_CHECK(stage_channels(levels[i]) == head_channels(),
                          "detector.levels must share a channel count for the shared heads");
    }
    DETADV_CONFIG_CHECK(!anchor_scales.empty() && !anchor_ratios.empty(),
                        "anchor scales/ratios must not be empty");
    DETADV_CONFIG_CHECK(anchor_base > 0, "detector.anchor_base must be > 0");
    DETADV_CONFIG_CHECK(loss_weight_w >= 0, "detector.loss_weight_w must be >= 0");
    DETADV_CONFIG_CHECK(huber_delta > 0, "detector.huber_delta must be > 0");
    DETADV_CONFIG_CHECK(0 <= neg_iou && neg_iou <= pos_iou && pos_iou <= 1,
                        "require 0 <= neg_iou <= pos_iou <= 1");
    DETADV_CONFIG_CHECK(bn_branches >= 1 && bn_branches <= 3,
                        "detector.bn_branches must be 1, 2 or 3");
    DETADV_CONFIG_CHECK(bn_epsilon > 0, "detector.bn_epsilon must be > 0");
    DETADV_CONFIG_CHECK(bn_decay >= 0 && bn_decay < 1, "detector.bn_decay must be in [0, 1)");
  }
};

enum class AttackMode { kNonTargeted, kTargeted };
enum class AttackSourceKind { kCls, kLoc, kDet, kMaxMax };
enum class TargetScope { kAllAnchors, kObjectAnchors };

// Attack strengths are in 255-scale pixel units: epsilon = 1 means an L-inf
// radius of 2/255 in the [-1, 1] pixel domain.
struct AttackConfig {
  AttackMode mode = AttackMode::kNonTargeted;
  AttackSourceKind source = AttackSourceKind::kMaxMax;
  double epsilon = 1.0;
  bool random_init = true;
  TargetScope target_scope = TargetScope::kAllAnchors;
  std::optional<double> epsilon_object;
  std::optional<double> epsilon_background;
  // Whether attack-time forwards use batch statistics; the default keeps the
  // branch running statistics frozen while the attack is generated.
  bool training_stats = false;

  bool region_weighted() const { return epsilon_object.has_value() || epsilon_background.has_value(); }

  void validate() const {
    DETADV_CONFIG_CHECK(epsilon >= 0, "attack.epsilon must be >= 0");
    DETADV_CONFIG_CHECK(epsilon_object.has_value() == epsilon_background.has_value(),
                        "attack.epsilon_object and attack.epsilon_background must be set together");
    if (epsilon_object) {
      DETADV_CONFIG_CHECK(*epsilon_object >= 0 && *epsilon_background >= 0,
                          "region attack strengths must be >= 0");
    }
  }
};

// Converts a 255-scale strength into the [-1, 1] pixel domain.
inline double epsilon_to_pixel(double epsilon) { return 2.0 * epsilon / 255.0; }

enum class TrainVariant { kVanilla, kDetAdvProp, kCls, kLoc, kDet, kThreeBn };

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double base_lr = 0.08;
  int warmup_epochs = 1;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  TrainVariant variant = TrainVariant::kVanilla;
  AttackConfig attack;
  std::uint64_t seed = 1;

  // Baseline augmentation: horizontal flip plus uniform scale jitter.
  bool hflip = true;
  bool scale_jitter = true;
  double jitter_min = 0.0;
  double jitter_max = 2.0;

  int required_branches() const {
    return variant == TrainVariant::kVanilla ? 1
           : variant == TrainVariant::kThreeBn ? 3
                                               : 2;
  }

  void validate() const {
    DETADV_CONFIG_CHECK(epochs >= 1, "train.epochs must be >= 1");
    DETADV_CONFIG_CHECK(batch_size >= 1, "train.batch_size must be >= 1");
    DETADV_CONFIG_CHECK(base_lr > 0, "train.base_lr must be > 0");
    DETADV_CONFIG_CHECK(warmup_epochs >= 0, "train.warmup_epochs must be >= 0");
    DETADV_CONFIG_CHECK(warmup_epochs <= epochs, "train.warmup_epochs must be <= train.epochs");
    DETADV_CONFIG_CHECK(momentum >= 0 && momentum < 1, "train.momentum must be in [0, 1)");
    DETADV_CONFIG_CHECK(weight_decay >= 0, "train.weight_decay must be >= 0");
    DETADV_CONFIG_CHECK(jitter_min >= 0 && jitter_min <= jitter_max,
                        "train.jitter range must satisfy 0 <= min <= max");
    attack.validate();
  }
};

// Synthetic scene generator settings: colored geometric shapes on a textured
// background, one class per shape kind.
struct SceneSpec {
  int image_size = 64;
  std::vector<std::string> catalog = {"circle", "square", "triangle"};
  int objects_min = 1;
  int objects_max = 3;
  double size_min = 14.0;
  double size_max = 44.0;
  double bg_level = 0.35;    // gradient endpoints drawn from [-bg_level, bg_level]
  double bg_noise = 0.05;    // per-pixel texture amplitude
  double max_overlap_iou = 0.25;
  int place_retries = 24;
  double val_fraction = 0.2;

  int num_classes() const { return static_cast<int>(catalog.size()); }

  void validate() const {
    DETADV_CONFIG_CHECK(image_size >= 8, "scene.image_size must be >= 8");
    DETADV_CONFIG_CHECK(!catalog.empty(), "scene.catalog must have at least one class");
    for (const std::string& kind : catalog)
      DETADV_CONFIG_CHECK(kind == "circle" || kind == "square" || kind == "triangle",
                          "scene.catalog: unknown shape kind '", kind, "'");
    DETADV_CONFIG_CHECK(objects_min >= 0 && objects_min <= objects_max,
                        "scene.objects range must satisfy 0 <= min <= max");
    DETADV_CONFIG_CHECK(size_min >= 2 && size_min <= size_max && size_max <= image_size,
                        "scene.size range must satisfy 2 <= min <= max <= image_size");
    DETADV_CONFIG_CHECK(bg_noise >= 0 && bg_level >= 0, "scene background amplitudes must be >= 0");
    DETADV_CONFIG_CHECK(val_fraction >= 0 && val_fraction < 1, "scene.val_fraction must be in [0, 1)");
  }
};

inline const char* to_string(AttackMode m) {
  return m == AttackMode::kTargeted ? "targeted" : "nontargeted";
}
inline const char* to_string(AttackSourceKind s) {
  switch (s) {
    case AttackSourceKind::kCls: return "cls";
    case AttackSourceKind::kLoc: return "loc";
    case AttackSourceKind::kDet: return "det";
    default: return "maxmax";
  }
}
inline const char* to_string(TargetScope s) {
  return s == TargetScope::kAllAnchors ? "all_anchors" : "object_anchors";
}
inline const char* to_string(TrainVariant v) {
  switch (v) {
    case TrainVariant::kVanilla: return "vanilla";
    case TrainVariant::kDetAdvProp: return "det_advprop";
    case TrainVariant::kCls: return "cls";
    case TrainVariant::kLoc: return "loc";
    case TrainVariant::kDet: return "det";
    default: return "three_bn";
  }
}

inline AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "targeted") return AttackMode::kTargeted;
  if (s == "nontargeted") return AttackMode::kNonTargeted;
  throw ConfigError("unknown attack mode '" + s + "'");
}
inline AttackSourceKind attack_source_from_string(const std::string& s) {
  if (s == "cls") return AttackSourceKind::kCls;
  if (s == "loc") return AttackSourceKind::kLoc;
  if (s == "det") return AttackSourceKind::kDet;
  if (s == "maxmax") return AttackSourceKind::kMaxMax;
  throw ConfigError("unknown attack source '" + s + "'");
}
inline TargetScope target_scope_from_string(const std::string& s) {
  if (s == "all_anchors") return TargetScope::kAllAnchors;
  if (s == "object_anchors") return TargetScope::kObjectAnchors;
  throw ConfigError("unknown target scope '" + s + "'");
}
inline TrainVariant train_variant_from_string(const std::string& s) {
  if (s == "vanilla") return TrainVariant::kVanilla;
  if (s == "det_advprop") return TrainVariant::kDetAdvProp;
  if (s == "cls") return TrainVariant::kCls;
  if (s == "loc") return TrainVariant::kLoc;
  if (s == "det") return TrainVariant::kDet;
  if (s == "three_bn") return TrainVariant::kThreeBn;
  throw ConfigError("unknown train variant '" + s + "'");
}

}  // namespace detadv
