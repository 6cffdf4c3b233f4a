#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "detadvprop/boxes.hpp"
#include "detadvprop/common.hpp"

namespace detadv {

// COCO-protocol thresholds: 0.50:0.05:0.95.
inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

struct VariantScore {
  std::string kind;
  int severity = 0;
  double map = 0.0;
};

// All AP values on the [0, 100] scale.
struct EvalReport {
  double map = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::vector<double> per_class_ap;
  std::vector<VariantScore> per_variant_map;
  std::optional<double> mean_corrupted_map;
  std::optional<double> rpc_percent;
};

// [OP] evaluate — greedy score-ordered matching per class and IoU threshold,
// 101-point interpolated AP, averaged over thresholds 0.50:0.05:0.95.
// Classes absent from the ground truth are excluded from the mean.
inline EvalReport evaluate(const std::vector<std::vector<Detection>>& detections,
                           const std::vector<Annotation>& annotations, int num_classes,
                           const std::vector<double>& iou_thresholds = coco_iou_thresholds(),
                           int max_dets = 100) {
  DETADV_CHECK(detections.size() == annotations.size(),
               "evaluate: detections/annotations image count mismatch");
  const int num_images = static_cast<int>(detections.size());
  for (const auto& dets : detections)
    for (const Detection& d : dets)
      DETADV_CHECK(d.class_id >= 0 && d.class_id < num_classes, "evaluate: class id ",
                   d.class_id, " outside the catalog of ", num_classes, " classes");

  // Per-image detections capped at max_dets by descending score.
  std::vector<std::vector<Detection>> capped(num_images);
  for (int im = 0; im < num_images; ++im) {
    capped[im] = detections[im];
    std::stable_sort(capped[im].begin(), capped[im].end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (static_cast<int>(capped[im].size()) > max_dets) capped[im].resize(max_dets);
  }

  struct ClassAccumulator {
    double ap_sum = 0.0;  // over thresholds
    double ap50 = 0.0, ap75 = 0.0;
    bool has_gt = false;
  };
  std::vector<ClassAccumulator> acc(num_classes);

  for (int cls = 0; cls < num_classes; ++cls) {
    // Gather this class's ground truth and detections.
    std::vector<std::vector<int>> gt_of_image(num_images);
    int total_gt = 0;
    for (int im = 0; im < num_images; ++im)
      for (std::size_t g = 0; g < annotations[im].size(); ++g)
        if (annotations[im].classes[g] == cls) {
          gt_of_image[im].push_back(static_cast<int>(g));
          ++total_gt;
        }
    if (total_gt == 0) continue;
    acc[cls].has_gt = true;

    struct Det {
      double score;
      int image;
      Box box;
    };
    std::vector<Det> dets;
    for (int im = 0; im < num_images; ++im)
      for (const Detection& d : capped[im])
        if (d.class_id == cls) dets.push_back({d.score, im, d.box});
    std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.image < b.image;
    });

    for (double thr : iou_thresholds) {
      std::vector<std::vector<bool>> matched(num_images);
      for (int im = 0; im < num_images; ++im)
        matched[im].assign(gt_of_image[im].size(), false);

      std::vector<bool> is_tp(dets.size(), false);
      for (std::size_t d = 0; d < dets.size(); ++d) {
        const auto& gts = gt_of_image[dets[d].image];
        // Highest-IoU unmatched ground truth at or above the threshold;
        // equal IoUs keep the first.
        double best_iou = -1.0;
        int best = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (matched[dets[d].image][g]) continue;
          const double v = iou(dets[d].box, annotations[dets[d].image].boxes[gts[g]]);
          if (v >= thr && v > best_iou) {
            best_iou = v;
            best = static_cast<int>(g);
          }
        }
        if (best >= 0) {
          matched[dets[d].image][best] = true;
          is_tp[d] = true;
        }
      }

      // Precision/recall curve and its 101-point interpolation.
      std::vector<double> precision(dets.size()), recall(dets.size());
      int tp = 0;
      for (std::size_t d = 0; d < dets.size(); ++d) {
        tp += is_tp[d] ? 1 : 0;
        precision[d] = static_cast<double>(tp) / static_cast<double>(d + 1);
        recall[d] = static_cast<double>(tp) / total_gt;
      }
      // Monotone envelope from the right.
      for (int d = static_cast<int>(dets.size()) - 2; d >= 0; --d)
        precision[d] = std::max(precision[d], precision[d + 1]);

      double ap = 0.0;
      std::size_t cursor = 0;
      for (int r = 0; r <= 100; ++r) {
        const double want = r / 100.0;
        while (cursor < dets.size() && recall[cursor] < want) ++cursor;
        if (cursor < dets.size()) ap += precision[cursor];
      }
      ap /= 101.0;

      acc[cls].ap_sum += ap;
      if (std::abs(thr - 0.50) < 1e-9) acc[cls].ap50 = ap;
      if (std::abs(thr - 0.75) < 1e-9) acc[cls].ap75 = ap;
    }
  }

  EvalReport report;
  report.per_class_ap.assign(num_classes, 0.0);
  int classes_with_gt = 0;
  double map_sum = 0.0, ap50_sum = 0.0, ap75_sum = 0.0;
  for (int cls = 0; cls < num_classes; ++cls) {
    if (!acc[cls].has_gt) {
      report.per_class_ap[cls] = std::nan("");
      continue;
    }
    ++classes_with_gt;
    const double cls_map = acc[cls].ap_sum / static_cast<double>(iou_thresholds.size());
    report.per_class_ap[cls] = 100.0 * cls_map;
    map_sum += cls_map;
    ap50_sum += acc[cls].ap50;
    ap75_sum += acc[cls].ap75;
  }
  DETADV_CHECK(classes_with_gt > 0, "evaluate: no ground truth in any class");
  report.map = 100.0 * map_sum / classes_with_gt;
  report.ap50 = 100.0 * ap50_sum / classes_with_gt;
  report.ap75 = 100.0 * ap75_sum / classes_with_gt;
  return report;
}

// [OP] rpc — relative performance under corruption, in percent.
inline double rpc(double clean_map, double mean_corrupted_map) {
  DETADV_CHECK(clean_map > 0.0, "rpc: undefined for clean mAP = 0");
  return 100.0 * mean_corrupted_map / clean_map;
}

// [OP] evaluate_grid — fold per-variant results into the clean report:
// unweighted arithmetic mean over (kind, severity) variants plus rPC.
inline EvalReport evaluate_grid(const EvalReport& clean,
                                const std::vector<VariantScore>& variant_scores,
                                const std::vector<std::pair<std::string, int>>& expected) {
  for (const auto& [kind, severity] : expected) {
    bool found = false;
    for (const VariantScore& v : variant_scores)
      if (v.kind == kind && v.severity == severity) found = true;
    DETADV_CHECK(found, "evaluate_grid: missing variant ", kind, " severity ", severity);
  }
  DETADV_CHECK(!variant_scores.empty(), "evaluate_grid: no variants");
  EvalReport out = clean;
  out.per_variant_map = variant_scores;
  double sum = 0.0;
  for (const VariantScore& v : variant_scores) sum += v.map;
  out.mean_corrupted_map = sum / static_cast<double>(variant_scores.size());
  out.rpc_percent = rpc(clean.map, *out.mean_corrupted_map);
  return out;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json j{{"map", r.map}, {"ap50", r.ap50}, {"ap75", r.ap75}};
  nlohmann::json per_class = nlohmann::json::array();
  for (double v : r.per_class_ap)
    per_class.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  j["per_class_ap"] = per_class;
  if (!r.per_variant_map.empty()) {
    nlohmann::json variants = nlohmann::json::array();
    for (const VariantScore& v : r.per_variant_map)
      variants.push_back({{"kind", v.kind}, {"severity", v.severity}, {"map", v.map}});
    j["per_variant_map"] = variants;
  }
  if (r.mean_corrupted_map) j["mean_corrupted_map"] = *r.mean_corrupted_map;
  if (r.rpc_percent) j["rpc_percent"] = *r.rpc_percent;
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.map = j.at("map").get<double>();
  r.ap50 = j.at("ap50").get<double>();
  r.ap75 = j.at("ap75").get<double>();
  for (const auto& v : j.at("per_class_ap"))
    r.per_class_ap.push_back(v.is_null() ? std::nan("") : v.get<double>());
  if (j.contains("per_variant_map"))
    for (const auto& v : j.at("per_variant_map"))
      r.per_variant_map.push_back(VariantScore{v.at("kind").get<std::string>(),
                                               v.at("severity").get<int>(),
                                               v.at("map").get<double>()});
  if (j.contains("mean_corrupted_map")) r.mean_corrupted_map = j.at("mean_corrupted_map").get<double>();
  if (j.contains("rpc_percent")) r.rpc_percent = j.at("rpc_percent").get<double>();
  return r;
}

}  // namespace detadv
