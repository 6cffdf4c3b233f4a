#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "detadvprop/tensor.hpp"

namespace detadv {

// Images persist as binary PPM (P6, 8-bit). The [-1, 1] pixel domain maps to
// bytes via v = round((x + 1) * 127.5).
inline void write_ppm(const std::string& path, const Tensor& image) {
  DETADV_CHECK(image.rank() == 3 && image.dim(0) == 3, "write_ppm: expected [3, H, W]");
  const int h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  DETADV_CHECK(out.good(), "cannot open '", path, "' for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  std::string bytes(static_cast<std::size_t>(h) * w * 3, '\0');
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = image[(static_cast<std::size_t>(c) * h + y) * w + x];
        const double scaled = std::lround((v + 1.0) * 127.5);
        bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<char>(static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0)));
      }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  DETADV_CHECK(out.good(), "write failure on '", path, "'");
}

inline Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DETADV_CHECK(in.good(), "cannot open image '", path, "'");
  std::string magic;
  in >> magic;
  DETADV_CHECK(magic == "P6", "'", path, "': not a binary PPM");
  auto next_int = [&]() {
    // Skip whitespace and '#' comments.
    int c = in.get();
    while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
      if (c == '#')
        while (c != '\n' && c != EOF) c = in.get();
      c = in.get();
    }
    int value = 0;
    while (c >= '0' && c <= '9') {
      value = value * 10 + (c - '0');
      c = in.get();
    }
    return value;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  DETADV_CHECK(w > 0 && h > 0 && maxval == 255, "'", path, "': unsupported PPM header");
  std::string bytes(static_cast<std::size_t>(h) * w * 3, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  DETADV_CHECK(in.good(), "truncated image '", path, "'");
  Tensor image({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const unsigned char b =
            static_cast<unsigned char>(bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
        image[(static_cast<std::size_t>(c) * h + y) * w + x] = b / 127.5 - 1.0;
      }
  return image;
}

}  // namespace detadv
