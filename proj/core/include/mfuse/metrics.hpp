#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfuse/image.hpp"
#include "mfuse/ssim.hpp"

namespace mfuse {

/// Per-pixel 0/1 mask, row-major.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> m;

  BinaryMask() = default;
  BinaryMask(int w, int h, uint8_t fill = 0)
      : width(w), height(h), m(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int y, int x) { return m[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const {
    return m[static_cast<size_t>(y) * width + x];
  }
};

/// Half-plane mask: 1 where the coordinate (column if `vertical_split`,
/// row otherwise) is >= offset.
BinaryMask half_plane_mask(int width, int height, bool vertical_split,
                           int offset);

/// Shannon entropy in bits of the 8-bit quantized histogram (256 bins,
/// round(v*255)). 0 for a constant image, at most 8.
double entropy_bits(const GrayImage& img);

/// Fusion quality index: per 7x7 interior window, the universal quality
/// index of the fused image against each source, blended by the local
/// variance saliency lambda = var(x1|w) / (var(x1|w) + var(x2|w)) (0.5 when
/// both are 0), averaged over all windows. Value in [-1, 1]; 1 when
/// f = x1 = x2.
double piella_qs(const GrayImage& x1, const GrayImage& x2, const GrayImage& f,
                 const SsimConstants& k = {});

/// Separable Gaussian blur, kernel truncated at 3 sigma (radius
/// ceil(3*sigma), at least 1), mirrored borders.
GrayImage gaussian_blur(const GrayImage& img, double sigma);

/// Complementary defocus pair: p1 is blurred inside the mask and sharp
/// outside, p2 the reverse, so every pixel is sharp in exactly one of them.
struct SynthPair {
  GrayImage p1, p2;
};
SynthPair synth_pair(const GrayImage& sharp, const BinaryMask& mask,
                     double sigma);

/// One evaluation row for a fused image against its two sources.
struct MetricReport {
  double q_s = 0.0;
  double en = 0.0;
  double ssim1 = 0.0;  // mean windowed SSIM of f vs x1
  double ssim2 = 0.0;  // mean windowed SSIM of f vs x2
  double scope_score = 0.0;  // 1 - fusion_loss, higher is better
};

MetricReport evaluate(const GrayImage& x1, const GrayImage& x2,
                      const GrayImage& f, const SsimConstants& k = {});

/// Plain-text table, one row per report, fixed 4-decimal formatting:
///   pair  QS  EN  SSIM1  SSIM2  Scope
/// With `mean_row`, appends a "mean" row of column averages.
std::string report_table(const std::vector<std::string>& names,
                         const std::vector<MetricReport>& reports,
                         bool mean_row);

/// Naive baselines used as comparison points in tests and docs.
GrayImage average_fuse(const GrayImage& x1, const GrayImage& x2);

/// Per-pixel selection of the source with larger local 7x7 luminance spread
/// (window clamped at borders, ties to x1).
GrayImage select_sharper_fuse(const GrayImage& x1, const GrayImage& x2);

}  // namespace mfuse
