#include "mfuse/image.hpp"

#include <algorithm>
#include <cmath>

namespace mfuse {
namespace detail {

std::vector<float> local_std(const GrayImage& img, int radius) {
  const int w = img.width, h = img.height;
  // (h+1) x (w+1) summed-area tables of value and value^2
  std::vector<double> s1((w + 1) * (h + 1), 0.0), s2((w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double r1 = 0.0, r2 = 0.0;
    for (int x = 0; x < w; ++x) {
      const double v = img.at(y, x);
      r1 += v;
      r2 += v * v;
      s1[(y + 1) * (w + 1) + x + 1] = s1[y * (w + 1) + x + 1] + r1;
      s2[(y + 1) * (w + 1) + x + 1] = s2[y * (w + 1) + x + 1] + r2;
    }
  }
  auto box = [&](const std::vector<double>& s, int y0, int x0, int y1,
                 int x1) {
    return s[y1 * (w + 1) + x1] - s[y0 * (w + 1) + x1] - s[y1 * (w + 1) + x0] +
           s[y0 * (w + 1) + x0];
  };
  std::vector<float> out(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius), y1 = std::min(h, y + radius + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius), x1 = std::min(w, x + radius + 1);
      const double n = static_cast<double>(y1 - y0) * (x1 - x0);
      const double m = box(s1, y0, x0, y1, x1) / n;
      const double var = std::max(0.0, box(s2, y0, x0, y1, x1) / n - m * m);
      out[static_cast<size_t>(y) * w + x] = static_cast<float>(std::sqrt(var));
    }
  }
  return out;
}

}  // namespace detail

RgbImage fuse_color(const RgbImage& src1, const RgbImage& src2,
                    const GrayImage& fused_luma) {
  if (!src1.same_size(src2) || src1.width != fused_luma.width ||
      src1.height != fused_luma.height) {
    throw std::invalid_argument("fuse_color: image sizes differ");
  }
  const GrayImage y1 = luminance(src1);
  const GrayImage y2 = luminance(src2);
  const std::vector<float> sd1 = detail::local_std(y1, 3);
  const std::vector<float> sd2 = detail::local_std(y2, 3);

  RgbImage out(src1.width, src1.height);
  const size_t n = static_cast<size_t>(src1.width) * src1.height;
  for (size_t i = 0; i < n; ++i) {
    const bool pick1 = sd1[i] >= sd2[i];
    const float* s = pick1 ? &src1.pix[3 * i] : &src2.pix[3 * i];
    const float ys = pick1 ? y1.pix[i] : y2.pix[i];
    // full-range BT.601 chroma of the chosen source, recombined with the
    // fused luma via the exact inverse of the forward transform
    const float cb = (s[2] - ys) / 1.772f;
    const float cr = (s[0] - ys) / 1.402f;
    const float yf = fused_luma.pix[i];
    const float r = yf + 1.402f * cr;
    const float b = yf + 1.772f * cb;
    const float g = (yf - 0.299f * r - 0.114f * b) / 0.587f;
    out.pix[3 * i] = std::clamp(r, 0.0f, 1.0f);
    out.pix[3 * i + 1] = std::clamp(g, 0.0f, 1.0f);
    out.pix[3 * i + 2] = std::clamp(b, 0.0f, 1.0f);
  }
  return out;
}

}  // namespace mfuse
