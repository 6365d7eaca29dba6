#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mfuse/tensor.hpp"

namespace mfuse {

/// Single-channel image, row-major, values in [0,1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pix;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), pix(static_cast<size_t>(w) * h, fill) {}

  float& at(int y, int x) { return pix[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const {
    return pix[static_cast<size_t>(y) * width + x];
  }
  bool same_size(const GrayImage& o) const {
    return width == o.width && height == o.height;
  }
};

/// Interleaved RGB image, row-major, values in [0,1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<float> pix;  // 3 * width * height, r g b per pixel

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pix(3ull * w * h, 0.0f) {}

  float* at(int y, int x) {
    return pix.data() + 3ull * (static_cast<size_t>(y) * width + x);
  }
  const float* at(int y, int x) const {
    return pix.data() + 3ull * (static_cast<size_t>(y) * width + x);
  }
  bool same_size(const RgbImage& o) const {
    return width == o.width && height == o.height;
  }
};

/// ITU-R BT.601 luma weights, the single channel the network consumes.
inline float luma601(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

inline GrayImage luminance(const RgbImage& rgb) {
  GrayImage out(rgb.width, rgb.height);
  for (size_t i = 0, n = static_cast<size_t>(rgb.width) * rgb.height; i < n;
       ++i) {
    out.pix[i] = luma601(rgb.pix[3 * i], rgb.pix[3 * i + 1], rgb.pix[3 * i + 2]);
  }
  return out;
}

inline Tensor to_tensor(const GrayImage& img) {
  if (img.width < 1 || img.height < 1) {
    throw std::invalid_argument("to_tensor: empty image");
  }
  return Tensor::from_data({1, 1, img.height, img.width}, img.pix);
}

inline GrayImage from_tensor(const Tensor& t) {
  const TensorShape& s = t.shape();
  if (s.n != 1 || s.c != 1) {
    throw std::invalid_argument("from_tensor: expected 1x1xHxW, got " +
                                s.str());
  }
  GrayImage img(static_cast<int>(s.w), static_cast<int>(s.h));
  for (size_t i = 0; i < img.pix.size(); ++i) {
    img.pix[i] = std::clamp(t.data()[i], 0.0f, 1.0f);
  }
  return img;
}

namespace detail {

/// Local standard deviation with a window clamped to the image at borders,
/// so every pixel gets a value. Used only for chroma selection.
std::vector<float> local_std(const GrayImage& img, int radius);

}  // namespace detail

/// Rebuilds a color fusion from the fused luminance: chroma of each pixel is
/// copied from the source whose local luminance spread (7x7 window, clamped
/// at borders) is larger, ties favoring the first source. The luma channel is
/// replaced wholesale by the fused one.
RgbImage fuse_color(const RgbImage& src1, const RgbImage& src2,
                    const GrayImage& fused_luma);

}  // namespace mfuse
