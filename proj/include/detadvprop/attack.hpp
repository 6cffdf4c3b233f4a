#pragma once

#include <optional>
#include <vector>

#include "detadvprop/boxes.hpp"
#include "detadvprop/config.hpp"
#include "detadvprop/detector.hpp"
#include "detadvprop/losses.hpp"
#include "detadvprop/rng.hpp"

namespace detadv {

enum class AttackTag { kCls, kLoc, kDet };

inline const char* to_string(AttackTag t) {
  switch (t) {
    case AttackTag::kCls: return "cls";
    case AttackTag::kLoc: return "loc";
    default: return "det";
  }
}

// Adversarial images plus the per-image loss branch they were sourced from.
struct AdversarialBatch {
  Tensor images;
  std::vector<AttackTag> source_tag;
};

// Per-pixel L-inf radii in the [-1, 1] domain, same shape as the batch.
inline Tensor uniform_epsilon_map(const std::vector<int>& batch_shape, double epsilon_255) {
  Tensor map(batch_shape);
  map.fill(epsilon_to_pixel(epsilon_255));
  return map;
}

// [OP] region_weighted_epsilon — object pixels (center inside any GT box)
// carry eps_obj, everything else eps_bg; both in 255-scale units.
inline Tensor region_weighted_epsilon(const std::vector<Annotation>& anns, double eps_obj,
                                      double eps_bg, const std::vector<int>& batch_shape) {
  DETADV_CONFIG_CHECK(eps_obj >= 0 && eps_bg >= 0, "region attack strengths must be >= 0");
  const int batch = batch_shape[0], channels = batch_shape[1];
  const int h = batch_shape[2], w = batch_shape[3];
  DETADV_CHECK(static_cast<int>(anns.size()) == batch,
               "region_weighted_epsilon: annotation count mismatch");
  Tensor map(batch_shape);
  const double obj = epsilon_to_pixel(eps_obj), bg = epsilon_to_pixel(eps_bg);
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double cy = y + 0.5, cx = x + 0.5;
        bool inside = false;
        for (const Box& box : anns[b].boxes) {
          if (cy >= box.ymin && cy < box.ymax && cx >= box.xmin && cx < box.xmax) {
            inside = true;
            break;
          }
        }
        const double v = inside ? obj : bg;
        for (int c = 0; c < channels; ++c) map.at(b, c, y, x) = v;
      }
    }
  }
  return map;
}

// [OP] project_clip — clamp to the per-pixel ball around the origin, then to
// the valid pixel range.
inline Tensor project_clip(const Tensor& candidate, const Tensor& origin, const Tensor& eps_map) {
  DETADV_CHECK(candidate.same_shape(origin) && candidate.same_shape(eps_map),
               "project_clip: shape mismatch");
  Tensor out(candidate.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = origin[i] - eps_map[i];
    const double hi = origin[i] + eps_map[i];
    out[i] = std::clamp(std::clamp(candidate[i], lo, hi), -1.0, 1.0);
  }
  return out;
}

// [OP] input_gradient — gradient of the selected loss w.r.t. the input
// pixels. Parameters are untouched; running statistics are never committed.
inline Tensor input_gradient(const DetectorState& state, const Tensor& batch,
                             AttackSourceKind selector, const std::vector<AnchorTargets>& targets,
                             int branch, bool training_stats = false) {
  DETADV_CHECK(selector != AttackSourceKind::kMaxMax,
               "input_gradient: selector must be CLS, LOC or DET");
  const DetectorConfig& cfg = state.config;
  ForwardTrace trace;
  const BnStatsMode mode = training_stats ? BnStatsMode::kBatch : BnStatsMode::kRunning;
  RawPredictions preds = forward_pass(state, batch, branch, mode, false, &trace);

  Tensor dlogits(preds.logits.shape());
  Tensor doffsets(preds.offsets.shape());
  double loss = 0.0;
  if (selector == AttackSourceKind::kCls) {
    loss = focal_loss(preds.logits, targets, cfg.focal_alpha, cfg.focal_gamma, &dlogits);
  } else if (selector == AttackSourceKind::kLoc) {
    loss = huber_loss(preds.offsets, targets, cfg.huber_delta, &doffsets);
  } else {
    const LossBundle bundle = detection_loss_from_predictions(preds.logits, preds.offsets,
                                                              targets, cfg, &dlogits, &doffsets);
    loss = bundle.l_det;
  }
  DETADV_CHECK(std::isfinite(loss), "input_gradient: non-finite ", to_string(selector),
               " loss (", loss, ") on branch ", branch);

  Tensor dinput;
  backward_pass(state, trace, dlogits, doffsets, nullptr, &dinput);
  return dinput;
}

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// [OP] fgsm_attack — single-step FGSM with optional random initialization.
// Non-targeted ascends the loss on the true labels; targeted descends the
// loss on the adversarial labels. In both cases the result is projected onto
// the eps ball around the *original* batch and onto [-1, 1].
inline Tensor fgsm_attack(const DetectorState& state, const Tensor& batch,
                          AttackSourceKind selector, const std::vector<AnchorTargets>& targets,
                          const std::vector<AnchorTargets>* adv_targets, const Tensor& eps_map,
                          AttackMode mode, bool random_init, std::uint64_t rng_seed, int branch,
                          bool training_stats = false) {
  DETADV_CHECK(mode != AttackMode::kTargeted || adv_targets != nullptr,
               "fgsm_attack: targeted mode requires adversarial targets");
  Tensor x0 = batch;
  if (random_init) {
    Rng rng(rng_seed);
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double e = eps_map[i];
      x0[i] = std::clamp(x0[i] + rng.uniform(-e, e), -1.0, 1.0);
    }
  }
  const std::vector<AnchorTargets>& loss_targets =
      mode == AttackMode::kTargeted ? *adv_targets : targets;
  const Tensor grad = input_gradient(state, x0, selector, loss_targets, branch, training_stats);
  const double direction = mode == AttackMode::kTargeted ? -1.0 : 1.0;
  Tensor stepped(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i)
    stepped[i] = x0[i] + direction * eps_map[i] * sign0(grad[i]);
  return project_clip(stepped, batch, eps_map);
}

// [OP] make_targeted_labels — adversarial class targets for the targeted
// attack. Positive anchors always move to a class different from the true
// one; with scope all_anchors, background and ignore anchors get a uniform
// class as well. Box targets are untouched.
inline AnchorTargets make_targeted_labels(const AnchorTargets& targets, TargetScope scope, int K,
                                          std::uint64_t rng_seed) {
  DETADV_CONFIG_CHECK(K >= 2,
                      "targeted attack requires K >= 2: no alternative foreground class exists");
  Rng rng(rng_seed);
  AnchorTargets out = targets;
  out.adversarial = true;
  for (std::size_t a = 0; a < out.class_target.size(); ++a) {
    const int cls = targets.class_target[a];
    if (cls >= 0) {
      // Uniform over {0..K-1} \ {true class}.
      const int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(K - 1)));
      out.class_target[a] = pick >= cls ? pick + 1 : pick;
    } else if (scope == TargetScope::kAllAnchors) {
      out.class_target[a] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(K)));
    }
  }
  return out;
}

inline std::vector<AnchorTargets> make_targeted_labels_batch(
    const std::vector<AnchorTargets>& targets, TargetScope scope, int K, std::uint64_t rng_seed) {
  std::vector<AnchorTargets> out;
  out.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    out.push_back(make_targeted_labels(targets[i], scope, K, subseed(rng_seed, "targeted", i)));
  return out;
}

// [OP] maxmax_select — Eq. (6): per image keep the candidate with the larger
// total detection loss, evaluated on the true labels; ties go to the
// classification-sourced candidate.
inline AdversarialBatch maxmax_select(const DetectorState& state, const Tensor& x_cls,
                                      const Tensor& x_loc,
                                      const std::vector<AnchorTargets>& targets, int branch,
                                      bool training_stats = false) {
  DETADV_CHECK(x_cls.same_shape(x_loc), "maxmax_select: candidate shape mismatch");
  const BnStatsMode mode = training_stats ? BnStatsMode::kBatch : BnStatsMode::kRunning;

  std::vector<LossBundle> per_image_cls, per_image_loc;
  {
    RawPredictions preds = forward_pass(state, x_cls, branch, mode, false, nullptr);
    detection_loss_from_predictions(preds.logits, preds.offsets, targets, state.config, nullptr,
                                    nullptr, &per_image_cls);
  }
  {
    RawPredictions preds = forward_pass(state, x_loc, branch, mode, false, nullptr);
    detection_loss_from_predictions(preds.logits, preds.offsets, targets, state.config, nullptr,
                                    nullptr, &per_image_loc);
  }

  const int batch = x_cls.dim(0);
  const std::size_t image_size = x_cls.size() / batch;
  AdversarialBatch out;
  out.images = Tensor(x_cls.shape());
  out.source_tag.resize(batch);
  for (int b = 0; b < batch; ++b) {
    const bool keep_cls = per_image_cls[b].l_det >= per_image_loc[b].l_det;
    const Tensor& src = keep_cls ? x_cls : x_loc;
    std::copy(src.data() + b * image_size, src.data() + (b + 1) * image_size,
              out.images.data() + b * image_size);
    out.source_tag[b] = keep_cls ? AttackTag::kCls : AttackTag::kLoc;
  }
  return out;
}

// [OP] generate_adversarial — Algorithm 1 attack generation. CLS/LOC/DET run
// a single FGSM against the named loss; MAXMAX runs both single-task attacks
// and applies Eq. (6). Region-weighted strengths replace the scalar epsilon
// when configured (requires the ground-truth annotations).
inline AdversarialBatch generate_adversarial(const DetectorState& state, const Tensor& batch,
                                             const std::vector<AnchorTargets>& targets,
                                             const AttackConfig& cfg, int branch,
                                             std::uint64_t rng_seed,
                                             const std::vector<Annotation>* anns = nullptr) {
  cfg.validate();
  Tensor eps_map;
  if (cfg.region_weighted()) {
    DETADV_CHECK(anns != nullptr,
                 "generate_adversarial: region-weighted strengths need annotations");
    eps_map = region_weighted_epsilon(*anns, *cfg.epsilon_object, *cfg.epsilon_background,
                                      batch.shape());
  } else {
    eps_map = uniform_epsilon_map(batch.shape(), cfg.epsilon);
  }

  std::vector<AnchorTargets> adv_targets;
  const std::vector<AnchorTargets>* adv_ptr = nullptr;
  if (cfg.mode == AttackMode::kTargeted) {
    adv_targets = make_targeted_labels_batch(targets, cfg.target_scope,
                                             targets.empty() ? 0 : targets[0].num_classes,
                                             subseed(rng_seed, "labels"));
    adv_ptr = &adv_targets;
  }

  auto run = [&](AttackSourceKind selector, std::uint64_t seed) {
    return fgsm_attack(state, batch, selector, targets, adv_ptr, eps_map, cfg.mode,
                       cfg.random_init, seed, branch, cfg.training_stats);
  };

  AdversarialBatch out;
  switch (cfg.source) {
    case AttackSourceKind::kCls:
      out.images = run(AttackSourceKind::kCls, subseed(rng_seed, "cls"));
      out.source_tag.assign(batch.dim(0), AttackTag::kCls);
      break;
    case AttackSourceKind::kLoc:
      out.images = run(AttackSourceKind::kLoc, subseed(rng_seed, "loc"));
      out.source_tag.assign(batch.dim(0), AttackTag::kLoc);
      break;
    case AttackSourceKind::kDet:
      out.images = run(AttackSourceKind::kDet, subseed(rng_seed, "det"));
      out.source_tag.assign(batch.dim(0), AttackTag::kDet);
      break;
    case AttackSourceKind::kMaxMax: {
      Tensor x_cls = run(AttackSourceKind::kCls, subseed(rng_seed, "cls"));
      Tensor x_loc = run(AttackSourceKind::kLoc, subseed(rng_seed, "loc"));
      out = maxmax_select(state, x_cls, x_loc, targets, branch, cfg.training_stats);
      break;
    }
  }
  return out;
}

// Largest violation of the per-pixel ball; used by tests and the dump tool.
inline double epsilon_ball_violation(const Tensor& adv, const Tensor& origin,
                                     const Tensor& eps_map) {
  double worst = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    worst = std::max(worst, std::abs(adv[i] - origin[i]) - eps_map[i]);
    worst = std::max(worst, std::abs(adv[i]) - 1.0);
  }
  return worst;
}

inline double measured_linf(const Tensor& adv, const Tensor& origin) {
  double m = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) m = std::max(m, std::abs(adv[i] - origin[i]));
  return m;
}

}  // namespace detadv
