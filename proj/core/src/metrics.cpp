#include "mfuse/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mfuse/graph.hpp"
#include "mfuse/tensor.hpp"

namespace mfuse {
namespace {

/// Universal quality index from window moments. Degenerate windows fall back
/// to the defined sub-terms: constant windows compare means only, and two
/// identically zero windows count as a perfect match. The floor absorbs
/// summed-area cancellation noise (~1e-16 on constant input), orders of
/// magnitude below the variance of any genuinely non-constant 8-bit window.
constexpr double kDegenerate = 1e-12;

double q0_from_moments(double mx, double my, double vx, double vy,
                       double cxy) {
  const double den_l = mx * mx + my * my;
  const double den_c = vx + vy;
  const bool has_l = den_l > kDegenerate;
  const bool has_c = den_c > kDegenerate;
  if (has_l && has_c) return 4.0 * cxy * mx * my / (den_l * den_c);
  if (has_l) return 2.0 * mx * my / den_l;
  if (has_c) return 2.0 * cxy / den_c;
  return 1.0;
}

int mirror(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - i - 1;
  return i;
}

}  // namespace

BinaryMask half_plane_mask(int width, int height, bool vertical_split,
                           int offset) {
  BinaryMask mask(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      mask.at(y, x) = (vertical_split ? x : y) >= offset ? 1 : 0;
    }
  }
  return mask;
}

double entropy_bits(const GrayImage& img) {
  std::array<int64_t, 256> hist{};
  for (float v : img.pix) {
    const int bin = static_cast<int>(
        std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    ++hist[static_cast<size_t>(bin)];
  }
  const double total = static_cast<double>(img.pix.size());
  double en = 0.0;
  for (int64_t c : hist) {
    if (c == 0) continue;
    const double p = c / total;
    en -= p * std::log2(p);
  }
  return en;
}

double piella_qs(const GrayImage& x1, const GrayImage& x2, const GrayImage& f,
                 const SsimConstants& k) {
  if (!x1.same_size(x2) || !x1.same_size(f)) {
    throw std::invalid_argument("piella_qs: image sizes differ");
  }
  const WindowStatsMap m1 =
      window_stats(x1.pix.data(), f.pix.data(), x1.height, x1.width, k);
  const WindowStatsMap m2 =
      window_stats(x2.pix.data(), f.pix.data(), x2.height, x2.width, k);
  double acc = 0.0;
  for (size_t i = 0; i < m1.mean_x.size(); ++i) {
    const double v1 = m1.var_x[i], v2 = m2.var_x[i];
    const double lambda = v1 + v2 > kDegenerate ? v1 / (v1 + v2) : 0.5;
    const double q1 = q0_from_moments(m1.mean_x[i], m1.mean_y[i], v1,
                                      m1.var_y[i], m1.cov_xy[i]);
    const double q2 = q0_from_moments(m2.mean_x[i], m2.mean_y[i], v2,
                                      m2.var_y[i], m2.cov_xy[i]);
    acc += lambda * q1 + (1.0 - lambda) * q2;
  }
  return acc / static_cast<double>(m1.mean_x.size());
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma <= 0");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kern(static_cast<size_t>(radius) + 1);
  double norm = 0.0;
  for (int i = 0; i <= radius; ++i) {
    kern[static_cast<size_t>(i)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    norm += (i == 0 ? 1.0 : 2.0) * kern[static_cast<size_t>(i)];
  }
  for (double& v : kern) v /= norm;

  const int w = img.width, h = img.height;
  GrayImage tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = kern[0] * img.at(y, x);
      for (int i = 1; i <= radius; ++i) {
        acc += kern[static_cast<size_t>(i)] *
               (img.at(y, mirror(x - i, w)) + img.at(y, mirror(x + i, w)));
      }
      tmp.at(y, x) = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = kern[0] * tmp.at(y, x);
      for (int i = 1; i <= radius; ++i) {
        acc += kern[static_cast<size_t>(i)] *
               (tmp.at(mirror(y - i, h), x) + tmp.at(mirror(y + i, h), x));
      }
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

SynthPair synth_pair(const GrayImage& sharp, const BinaryMask& mask,
                     double sigma) {
  if (mask.width != sharp.width || mask.height != sharp.height) {
    throw std::invalid_argument("synth_pair: mask size differs from image");
  }
  const GrayImage blurred = gaussian_blur(sharp, sigma);
  SynthPair pair{GrayImage(sharp.width, sharp.height),
                 GrayImage(sharp.width, sharp.height)};
  for (size_t i = 0; i < sharp.pix.size(); ++i) {
    const bool in_mask = mask.m[i] != 0;
    pair.p1.pix[i] = in_mask ? blurred.pix[i] : sharp.pix[i];
    pair.p2.pix[i] = in_mask ? sharp.pix[i] : blurred.pix[i];
  }
  return pair;
}

MetricReport evaluate(const GrayImage& x1, const GrayImage& x2,
                      const GrayImage& f, const SsimConstants& k) {
  if (!x1.same_size(x2) || !x1.same_size(f)) {
    throw std::invalid_argument("evaluate: image sizes differ");
  }
  MetricReport r;
  r.q_s = piella_qs(x1, x2, f, k);
  r.en = entropy_bits(f);
  r.ssim1 = ssim_mean(x1.pix.data(), f.pix.data(), x1.height, x1.width, k);
  r.ssim2 = ssim_mean(x2.pix.data(), f.pix.data(), x2.height, x2.width, k);
  // the score is defined as 1 - loss and shares the loss implementation
  GraphT<float> g(false);
  const Tensor loss =
      fusion_loss(g, to_tensor(x1), to_tensor(x2), to_tensor(f), k);
  r.scope_score = 1.0 - static_cast<double>(loss.scalar());
  return r;
}

std::string report_table(const std::vector<std::string>& names,
                         const std::vector<MetricReport>& reports,
                         bool mean_row) {
  if (names.size() != reports.size()) {
    throw std::invalid_argument("report_table: name/report count mismatch");
  }
  std::string out = "pair  QS  EN  SSIM1  SSIM2  Scope\n";
  char line[256];
  auto add = [&](const std::string& name, const MetricReport& r) {
    std::snprintf(line, sizeof(line), "%s  %.4f  %.4f  %.4f  %.4f  %.4f\n",
                  name.c_str(), r.q_s, r.en, r.ssim1, r.ssim2, r.scope_score);
    out += line;
  };
  MetricReport mean;
  for (size_t i = 0; i < reports.size(); ++i) {
    add(names[i], reports[i]);
    mean.q_s += reports[i].q_s;
    mean.en += reports[i].en;
    mean.ssim1 += reports[i].ssim1;
    mean.ssim2 += reports[i].ssim2;
    mean.scope_score += reports[i].scope_score;
  }
  if (mean_row && !reports.empty()) {
    const double n = static_cast<double>(reports.size());
    mean.q_s /= n;
    mean.en /= n;
    mean.ssim1 /= n;
    mean.ssim2 /= n;
    mean.scope_score /= n;
    add("mean", mean);
  }
  return out;
}

GrayImage average_fuse(const GrayImage& x1, const GrayImage& x2) {
  if (!x1.same_size(x2)) {
    throw std::invalid_argument("average_fuse: image sizes differ");
  }
  GrayImage out(x1.width, x1.height);
  for (size_t i = 0; i < out.pix.size(); ++i) {
    out.pix[i] = 0.5f * (x1.pix[i] + x2.pix[i]);
  }
  return out;
}

GrayImage select_sharper_fuse(const GrayImage& x1, const GrayImage& x2) {
  if (!x1.same_size(x2)) {
    throw std::invalid_argument("select_sharper_fuse: image sizes differ");
  }
  const std::vector<float> sd1 = detail::local_std(x1, 3);
  const std::vector<float> sd2 = detail::local_std(x2, 3);
  GrayImage out(x1.width, x1.height);
  for (size_t i = 0; i < out.pix.size(); ++i) {
    out.pix[i] = sd1[i] >= sd2[i] ? x1.pix[i] : x2.pix[i];
  }
  return out;
}

}  // namespace mfuse
