#pragma once

#include <algorithm>
#include <cmath>

#include "detadvprop/boxes.hpp"
#include "detadvprop/rng.hpp"
#include "detadvprop/tensor.hpp"

namespace detadv {

struct Sample {
  Tensor image;  // [C, H, W]
  Annotation ann;
};

inline Sample hflip(const Sample& in) {
  const int channels = in.image.dim(0), h = in.image.dim(1), w = in.image.dim(2);
  Sample out;
  out.image = Tensor({channels, h, w});
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.image[(static_cast<std::size_t>(c) * h + y) * w + x] =
            in.image[(static_cast<std::size_t>(c) * h + y) * w + (w - 1 - x)];
  out.ann.classes = in.ann.classes;
  for (const Box& b : in.ann.boxes)
    out.ann.boxes.push_back(Box{b.ymin, w - b.xmax, b.ymax, w - b.xmin});
  return out;
}

inline Tensor bilinear_resize(const Tensor& img, int out_h, int out_w) {
  const int channels = img.dim(0), in_h = img.dim(1), in_w = img.dim(2);
  Tensor out({channels, out_h, out_w});
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int c = 0; c < channels; ++c) {
    const double* src = img.data() + static_cast<std::size_t>(c) * in_h * in_w;
    double* dst = out.data() + static_cast<std::size_t>(c) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, in_h - 1.0);
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, in_h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, in_w - 1.0);
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, in_w - 1);
        const double wx = fx - x0;
        const double top = (1 - wx) * src[y0 * in_w + x0] + wx * src[y0 * in_w + x1];
        const double bot = (1 - wx) * src[y1 * in_w + x0] + wx * src[y1 * in_w + x1];
        dst[y * out_w + x] = (1 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

// Scale jitter: resize by `scale`, then crop (scale > 1) or pad onto a
// mid-gray canvas (scale < 1) back to the original size. Boxes follow the
// transform; boxes that leave the frame or collapse below 2px a side drop.
inline Sample scale_jitter(const Sample& in, double scale, Rng& rng) {
  const int channels = in.image.dim(0), h = in.image.dim(1), w = in.image.dim(2);
  const int sh = std::max(1, static_cast<int>(std::lround(scale * h)));
  const int sw = std::max(1, static_cast<int>(std::lround(scale * w)));
  const double eff_y = static_cast<double>(sh) / h;
  const double eff_x = static_cast<double>(sw) / w;
  Tensor scaled = bilinear_resize(in.image, sh, sw);

  // Offset of the output window within the scaled image (crop) or of the
  // scaled image within the output canvas (pad), as a shift applied to boxes.
  const int off_y = sh >= h ? -static_cast<int>(rng.uniform_int(sh - h + 1))
                            : static_cast<int>(rng.uniform_int(h - sh + 1));
  const int off_x = sw >= w ? -static_cast<int>(rng.uniform_int(sw - w + 1))
                            : static_cast<int>(rng.uniform_int(w - sw + 1));

  Sample out;
  out.image = Tensor({channels, h, w});
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int syi = y - off_y;
        const int sxi = x - off_x;
        out.image[(static_cast<std::size_t>(c) * h + y) * w + x] =
            (syi >= 0 && syi < sh && sxi >= 0 && sxi < sw)
                ? scaled[(static_cast<std::size_t>(c) * sh + syi) * sw + sxi]
                : 0.0;
      }

  for (std::size_t i = 0; i < in.ann.boxes.size(); ++i) {
    const Box& b = in.ann.boxes[i];
    Box moved{b.ymin * eff_y + off_y, b.xmin * eff_x + off_x, b.ymax * eff_y + off_y,
              b.xmax * eff_x + off_x};
    Box clipped = moved.clipped(h, w);
    if (clipped.height() < 2.0 || clipped.width() < 2.0) continue;
    out.ann.boxes.push_back(clipped);
    out.ann.classes.push_back(in.ann.classes[i]);
  }
  return out;
}

}  // namespace detadv
