#pragma once

#include <algorithm>
#include <vector>

#include "detadvprop/anchors.hpp"
#include "detadvprop/boxes.hpp"
#include "detadvprop/detector.hpp"

namespace detadv {

// Decode raw predictions, clip to the image, greedy class-wise NMS, keep the
// top max_dets by score. Ordering ties break on (anchor, class) so the result
// is deterministic.
inline std::vector<std::vector<Detection>> decode_and_nms(const RawPredictions& preds,
                                                          const AnchorSet& anchors, int image_h,
                                                          int image_w, double score_thr,
                                                          double nms_iou, int max_dets) {
  DETADV_CONFIG_CHECK(score_thr >= 0 && score_thr <= 1, "score_thr must be in [0, 1]");
  DETADV_CONFIG_CHECK(nms_iou >= 0 && nms_iou <= 1, "nms_iou must be in [0, 1]");
  const int batch = preds.logits.dim(0);
  const int num_anchors = preds.logits.dim(1);
  const int num_classes = preds.logits.dim(2);
  DETADV_CHECK(num_anchors == anchors.total(), "decode: anchor count mismatch");

  std::vector<std::vector<Detection>> out(batch);
  struct Candidate {
    double score;
    int anchor;
    int cls;
    Box box;
  };
  for (int b = 0; b < batch; ++b) {
    std::vector<Candidate> cands;
    for (int a = 0; a < num_anchors; ++a) {
      for (int k = 0; k < num_classes; ++k) {
        const double z = preds.logits[(static_cast<std::size_t>(b) * num_anchors + a) * num_classes + k];
        const double score = 1.0 / (1.0 + std::exp(-z));
        if (score <= score_thr) continue;
        const std::size_t off = (static_cast<std::size_t>(b) * num_anchors + a) * 4;
        const std::array<double, 4> t = {preds.offsets[off], preds.offsets[off + 1],
                                         preds.offsets[off + 2], preds.offsets[off + 3]};
        Box box = decode_box(anchors.flat[a], t).clipped(image_h, image_w);
        if (!box.well_formed()) continue;
        cands.push_back({score, a, k, box});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
      if (x.score != y.score) return x.score > y.score;
      if (x.anchor != y.anchor) return x.anchor < y.anchor;
      return x.cls < y.cls;
    });

    std::vector<Candidate> kept;
    for (const Candidate& c : cands) {
      bool suppressed = false;
      for (const Candidate& k : kept) {
        if (k.cls == c.cls && iou(k.box, c.box) > nms_iou) {
          suppressed = true;
          break;
        }
      }
      if (!suppressed) kept.push_back(c);
      if (static_cast<int>(kept.size()) >= max_dets) break;
    }
    for (const Candidate& c : kept) out[b].push_back(Detection{c.cls, c.score, c.box});
  }
  return out;
}

}  // namespace detadv
