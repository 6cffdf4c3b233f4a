#pragma once

#include <vector>

#include "detadvprop/dataset.hpp"
#include "detadvprop/detector.hpp"
#include "detadvprop/nms.hpp"
#include "detadvprop/parallel.hpp"

namespace detadv {

struct InferenceSettings {
  double score_thr = 0.05;
  double nms_iou = 0.5;
  int max_dets = 100;
  int batch_size = 16;
};

struct InferenceResult {
  std::vector<std::vector<Detection>> detections;  // per image, id order
  std::vector<Annotation> annotations;
};

// Frozen main-branch inference over the listed image ids.
inline InferenceResult run_inference(const DetectorState& state, const Dataset& ds,
                                     const std::vector<int>& ids,
                                     const InferenceSettings& settings = {}) {
  DETADV_CHECK(!ids.empty(), "run_inference: no image ids");
  InferenceResult result;
  result.detections.resize(ids.size());
  result.annotations.resize(ids.size());

  const DatasetItem& first = ds.by_id(ids.front());
  const int h = first.height, w = first.width;
  AnchorSet anchors = generate_anchors(state.config, h, w);

  const std::size_t n_batches =
      (ids.size() + settings.batch_size - 1) / settings.batch_size;
  parallel_for(n_batches, [&](std::size_t bi) {
    const std::size_t begin = bi * settings.batch_size;
    const std::size_t end = std::min(begin + settings.batch_size, ids.size());
    const int bsz = static_cast<int>(end - begin);
    Tensor batch({bsz, state.config.in_channels, h, w});
    for (int i = 0; i < bsz; ++i) {
      const DatasetItem& item = ds.by_id(ids[begin + i]);
      Tensor image = read_ppm(ds.dir + "/" + item.file);
      DETADV_CHECK(image.dim(1) == h && image.dim(2) == w,
                   "run_inference: image size mismatch in dataset");
      std::copy(image.data(), image.data() + image.size(), batch.data() + batch.idx4(i, 0, 0, 0));
      result.annotations[begin + i] = item.ann;
    }
    RawPredictions preds = forward_frozen(state, batch, kMainBranch);
    auto dets = decode_and_nms(preds, anchors, h, w, settings.score_thr, settings.nms_iou,
                               settings.max_dets);
    for (int i = 0; i < bsz; ++i) result.detections[begin + i] = std::move(dets[i]);
  });
  return result;
}

}  // namespace detadv
