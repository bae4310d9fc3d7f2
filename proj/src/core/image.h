#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pagetext {

// Grayscale image, values in [0,1], row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> px;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), px(static_cast<size_t>(h) * static_cast<size_t>(w), fill) {}

  float& at(int y, int x) { return px[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return px[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return px.empty(); }

  // max of the four corner pixels; 0 for an empty image
  float corner_max() const;
  void clamp01();
};

// Bilinear sample with constant fill outside the image.
float bilinear_at(const Image& img, double y, double x, float fill);

// 8-bit binary PGM (P5)
void write_pgm(const Image& img, const std::string& path);
Image read_pgm(const std::string& path);

// 8-bit grayscale PNG; color inputs are converted by luminance on read
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

// dispatch on extension (.png / .pgm)
void write_image(const Image& img, const std::string& path);
Image read_image(const std::string& path);

}  // namespace pagetext
