#pragma once

#include <cmath>
#include <vector>

#include "detadvprop/anchors.hpp"
#include "detadvprop/config.hpp"
#include "detadvprop/tensor.hpp"

namespace detadv {

// l_det = l_cls + w * l_loc
struct LossBundle {
  double l_cls = 0.0;
  double l_loc = 0.0;
  double l_det = 0.0;

  bool finite() const {
    return std::isfinite(l_cls) && std::isfinite(l_loc) && std::isfinite(l_det);
  }

  LossBundle& operator+=(const LossBundle& other) {
    l_cls += other.l_cls;
    l_loc += other.l_loc;
    l_det += other.l_det;
    return *this;
  }

  LossBundle& operator*=(double s) {
    l_cls *= s;
    l_loc *= s;
    l_det *= s;
    return *this;
  }
};

namespace detail {
inline double softplus(double z) {
  // log(1 + e^z) without overflow.
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}
constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)
}  // namespace detail

// Sigmoid focal loss, mean over non-ignored anchors. Background anchors
// contribute through all-class-negative targets. Ignore-labeled anchors are
// excluded entirely. `dlogits`, when given, receives the gradient of the
// returned batch mean; `per_image` receives per-image means (each image
// normalized by its own non-ignored anchor count).
inline double focal_loss(const Tensor& logits, const std::vector<AnchorTargets>& targets,
                         double alpha, double gamma, Tensor* dlogits = nullptr,
                         std::vector<double>* per_image = nullptr) {
  const int batch = logits.dim(0), num_anchors = logits.dim(1), num_classes = logits.dim(2);
  DETADV_CHECK(static_cast<int>(targets.size()) == batch, "focal_loss: targets/batch mismatch");
  if (dlogits) *dlogits = Tensor(logits.shape());
  if (per_image) per_image->assign(batch, 0.0);

  double total = 0.0;
  long total_kept = 0;
  std::vector<long> kept_per_image(batch, 0);
  for (int b = 0; b < batch; ++b) {
    DETADV_CHECK(static_cast<int>(targets[b].size()) == num_anchors,
                 "focal_loss: anchor count mismatch");
    double image_sum = 0.0;
    for (int a = 0; a < num_anchors; ++a) {
      const int cls = targets[b].class_target[a];
      if (cls == kTargetIgnore) continue;
      ++kept_per_image[b];
      for (int k = 0; k < num_classes; ++k) {
        const std::size_t idx =
            (static_cast<std::size_t>(b) * num_anchors + a) * num_classes + k;
        const double zv = logits[idx];
        const double log_p = std::max(-detail::softplus(-zv), detail::kLogFloor);
        const double log_1mp = std::max(-detail::softplus(zv), detail::kLogFloor);
        const double p = 1.0 / (1.0 + std::exp(-zv));
        double elem, grad;
        if (cls == k) {
          const double one_m_p = 1.0 - p;
          const double mod = std::pow(one_m_p, gamma);
          elem = -alpha * mod * log_p;
          grad = alpha * mod * (gamma * p * log_p - one_m_p);
        } else {
          const double mod = std::pow(p, gamma);
          elem = -(1.0 - alpha) * mod * log_1mp;
          grad = (1.0 - alpha) * mod * (p - gamma * (1.0 - p) * log_1mp);
        }
        image_sum += elem;
        if (dlogits) (*dlogits)[idx] = grad;
      }
    }
    total += image_sum;
    total_kept += kept_per_image[b];
    if (per_image)
      (*per_image)[b] = kept_per_image[b] > 0 ? image_sum / kept_per_image[b] : 0.0;
  }

  if (total_kept == 0) {
    if (dlogits) dlogits->fill(0.0);
    return 0.0;
  }
  if (dlogits) *dlogits *= 1.0 / static_cast<double>(total_kept);
  return total / static_cast<double>(total_kept);
}

// Huber loss on box regression offsets, mean over positive anchors and the 4
// coordinates; 0 when there is no positive anchor.
inline double huber_loss(const Tensor& offsets, const std::vector<AnchorTargets>& targets,
                         double delta, Tensor* doffsets = nullptr,
                         std::vector<double>* per_image = nullptr) {
  DETADV_CONFIG_CHECK(delta > 0, "huber_loss: delta must be > 0");
  const int batch = offsets.dim(0), num_anchors = offsets.dim(1);
  DETADV_CHECK(static_cast<int>(targets.size()) == batch, "huber_loss: targets/batch mismatch");
  if (doffsets) *doffsets = Tensor(offsets.shape());
  if (per_image) per_image->assign(batch, 0.0);

  double total = 0.0;
  long total_pos = 0;
  for (int b = 0; b < batch; ++b) {
    DETADV_CHECK(static_cast<int>(targets[b].size()) == num_anchors,
                 "huber_loss: anchor count mismatch");
    double image_sum = 0.0;
    long pos = 0;
    for (int a = 0; a < num_anchors; ++a) {
      if (targets[b].class_target[a] < 0) continue;
      ++pos;
      for (int k = 0; k < 4; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(b) * num_anchors + a) * 4 + k;
        const double e = offsets[idx] - targets[b].box_target[a][k];
        const double ae = std::abs(e);
        image_sum += ae <= delta ? 0.5 * e * e : delta * (ae - 0.5 * delta);
        if (doffsets) (*doffsets)[idx] = std::clamp(e, -delta, delta);
      }
    }
    total += image_sum;
    total_pos += pos;
    if (per_image) (*per_image)[b] = pos > 0 ? image_sum / (4.0 * pos) : 0.0;
  }

  if (total_pos == 0) {
    if (doffsets) doffsets->fill(0.0);
    return 0.0;
  }
  if (doffsets) *doffsets *= 1.0 / (4.0 * static_cast<double>(total_pos));
  return total / (4.0 * static_cast<double>(total_pos));
}

inline LossBundle make_bundle(double l_cls, double l_loc, double w) {
  return LossBundle{l_cls, l_loc, l_cls + w * l_loc};
}

// Batch detection loss from raw predictions, with optional gradients and
// per-image bundles (used by the max-max selection rule).
inline LossBundle detection_loss_from_predictions(
    const Tensor& logits, const Tensor& offsets, const std::vector<AnchorTargets>& targets,
    const DetectorConfig& cfg, Tensor* dlogits = nullptr, Tensor* doffsets = nullptr,
    std::vector<LossBundle>* per_image = nullptr) {
  std::vector<double> cls_pi, loc_pi;
  const double l_cls = focal_loss(logits, targets, cfg.focal_alpha, cfg.focal_gamma, dlogits,
                                  per_image ? &cls_pi : nullptr);
  const double l_loc = huber_loss(offsets, targets, cfg.huber_delta, doffsets,
                                  per_image ? &loc_pi : nullptr);
  if (doffsets) *doffsets *= cfg.loss_weight_w;
  if (per_image) {
    per_image->clear();
    for (std::size_t i = 0; i < cls_pi.size(); ++i)
      per_image->push_back(make_bundle(cls_pi[i], loc_pi[i], cfg.loss_weight_w));
  }
  return make_bundle(l_cls, l_loc, cfg.loss_weight_w);
}

}  // namespace detadv
