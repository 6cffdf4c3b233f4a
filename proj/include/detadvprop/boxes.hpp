#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "detadvprop/common.hpp"

namespace detadv {

// Axis-aligned box, (ymin, xmin, ymax, xmax) in pixel units.
struct Box {
  double ymin = 0.0, xmin = 0.0, ymax = 0.0, xmax = 0.0;

  double height() const { return ymax - ymin; }
  double width() const { return xmax - xmin; }
  double area() const { return std::max(0.0, height()) * std::max(0.0, width()); }
  double center_y() const { return 0.5 * (ymin + ymax); }
  double center_x() const { return 0.5 * (xmin + xmax); }
  bool well_formed() const { return ymin < ymax && xmin < xmax; }

  Box clipped(double h, double w) const {
    return Box{std::clamp(ymin, 0.0, h), std::clamp(xmin, 0.0, w),
               std::clamp(ymax, 0.0, h), std::clamp(xmax, 0.0, w)};
  }
};

inline bool operator==(const Box& a, const Box& b) {
  return a.ymin == b.ymin && a.xmin == b.xmin && a.ymax == b.ymax && a.xmax == b.xmax;
}

// Intersection over union; degenerate (zero-area) boxes give 0 by convention.
inline double iou(const Box& a, const Box& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double iy = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  const double ix = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  if (iy <= 0.0 || ix <= 0.0) return 0.0;
  const double inter = iy * ix;
  return inter / (area_a + area_b - inter);
}

// Ground-truth boxes and class labels of one image.
struct Annotation {
  std::vector<Box> boxes;
  std::vector<int> classes;

  std::size_t size() const { return boxes.size(); }
  bool empty() const { return boxes.empty(); }

  void validate(double image_h, double image_w, int num_classes) const {
    DETADV_CHECK(boxes.size() == classes.size(), "annotation: boxes/classes length mismatch");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const Box& b = boxes[i];
      DETADV_CHECK(b.well_formed(), "annotation: malformed box at index ", i);
      DETADV_CHECK(b.ymin >= 0 && b.xmin >= 0 && b.ymax <= image_h && b.xmax <= image_w,
                   "annotation: box outside image bounds at index ", i);
      DETADV_CHECK(classes[i] >= 0 && classes[i] < num_classes,
                   "annotation: class id ", classes[i], " outside [0, ", num_classes, ")");
    }
  }
};

struct Detection {
  int class_id = 0;
  double score = 0.0;
  Box box;
};

}  // namespace detadv
