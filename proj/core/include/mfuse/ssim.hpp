#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfuse/graph.hpp"
#include "mfuse/tensor.hpp"

namespace mfuse {

/// Stabilizing constants and window size for the windowed structural
/// similarity used both as the training loss and as a quality score.
struct SsimConstants {
  double c1 = 1e-4;
  double c2 = 9e-4;
  int window = 7;

  void validate() const {
    if (!(c1 > 0.0) || !(c2 > 0.0)) {
      throw std::invalid_argument("ssim constants must be positive");
    }
    if (window < 3 || window % 2 == 0) {
      throw std::invalid_argument("ssim window must be odd and >= 3");
    }
  }
};

/// Per-window first and second moments for every fully-interior sliding
/// window of an image pair, stride 1, scanned top-left to bottom-right.
/// Variances are population (divide by window pixel count) and clamped at 0.
struct WindowStatsMap {
  int rows = 0;  // H - window + 1
  int cols = 0;  // W - window + 1
  std::vector<double> mean_x, mean_y, var_x, var_y, cov_xy;

  int64_t count() const { return static_cast<int64_t>(rows) * cols; }
};

namespace detail {

/// (h+1) x (w+1) summed-area table; sums are kept in double regardless of
/// the pixel type so window sums agree with a direct loop to ~1e-13.
class SummedArea {
 public:
  template <typename T>
  SummedArea(const T* a, const T* b, int h, int w, bool product)
      : h_(h), w_(w), s_((h + 1) * (w + 1), 0.0) {
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      const double* up = s_.data() + y * (w_ + 1);
      double* cur = s_.data() + (y + 1) * (w_ + 1);
      for (int x = 0; x < w; ++x) {
        const double v = product
                             ? static_cast<double>(a[y * w + x]) *
                                   static_cast<double>(b[y * w + x])
                             : static_cast<double>(a[y * w + x]);
        row += v;
        cur[x + 1] = up[x + 1] + row;
      }
    }
  }

  /// Sum over the window with top-left (y, x) and side `win`.
  double window_sum(int y, int x, int win) const {
    const int stride = w_ + 1;
    const double* s = s_.data();
    return s[(y + win) * stride + (x + win)] - s[y * stride + (x + win)] -
           s[(y + win) * stride + x] + s[y * stride + x];
  }

 private:
  int h_, w_;
  std::vector<double> s_;
};

inline double ssim_from_moments(double mx, double my, double vx, double vy,
                                double cxy, const SsimConstants& k) {
  const double a1 = 2.0 * mx * my + k.c1;
  const double a2 = 2.0 * cxy + k.c2;
  const double b1 = mx * mx + my * my + k.c1;
  const double b2 = vx + vy + k.c2;
  return (a1 * a2) / (b1 * b2);
}

}  // namespace detail

/// Sliding-window means, variances and covariance of two equally sized
/// single-channel images, computed through summed-area tables.
template <typename T>
WindowStatsMap window_stats(const T* x, const T* y, int h, int w,
                            const SsimConstants& k = {}) {
  k.validate();
  if (h < k.window || w < k.window) {
    throw std::invalid_argument(
        "window_stats: image " + std::to_string(h) + "x" + std::to_string(w) +
        " smaller than " + std::to_string(k.window) + "x" +
        std::to_string(k.window) + " window");
  }
  const int win = k.window;
  const double inv_count = 1.0 / (win * win);
  detail::SummedArea sx(x, x, h, w, false);
  detail::SummedArea sy(y, y, h, w, false);
  detail::SummedArea sxx(x, x, h, w, true);
  detail::SummedArea syy(y, y, h, w, true);
  detail::SummedArea sxy(x, y, h, w, true);

  WindowStatsMap m;
  m.rows = h - win + 1;
  m.cols = w - win + 1;
  const size_t n = static_cast<size_t>(m.rows) * m.cols;
  m.mean_x.resize(n);
  m.mean_y.resize(n);
  m.var_x.resize(n);
  m.var_y.resize(n);
  m.cov_xy.resize(n);
  size_t i = 0;
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c, ++i) {
      const double mx = sx.window_sum(r, c, win) * inv_count;
      const double my = sy.window_sum(r, c, win) * inv_count;
      m.mean_x[i] = mx;
      m.mean_y[i] = my;
      m.var_x[i] =
          std::max(0.0, sxx.window_sum(r, c, win) * inv_count - mx * mx);
      m.var_y[i] =
          std::max(0.0, syy.window_sum(r, c, win) * inv_count - my * my);
      m.cov_xy[i] = sxy.window_sum(r, c, win) * inv_count - mx * my;
    }
  }
  return m;
}

template <typename T>
WindowStatsMap window_stats(const TensorT<T>& x, const TensorT<T>& y,
                            const SsimConstants& k = {}) {
  if (!(x.shape() == y.shape()) || x.shape().n != 1 || x.shape().c != 1) {
    throw std::invalid_argument("window_stats: expected two equal 1x1xHxW images");
  }
  return window_stats(x.data().data(), y.data().data(),
                      static_cast<int>(x.shape().h),
                      static_cast<int>(x.shape().w), k);
}

/// SSIM value of every window; 1 means the two windows are identical.
/// Values lie in [-1, 1] up to rounding.
inline std::vector<double> ssim_per_window(const WindowStatsMap& m,
                                           const SsimConstants& k = {}) {
  k.validate();
  std::vector<double> out(m.mean_x.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = detail::ssim_from_moments(m.mean_x[i], m.mean_y[i], m.var_x[i],
                                       m.var_y[i], m.cov_xy[i], k);
  }
  return out;
}

/// Per-window source selection: 1 where std(x1|w) >= std(x2|w) (window of x1
/// is the clearer one, ties included), else 0. Depends only on the inputs,
/// never on the fused image.
template <typename T>
std::vector<uint8_t> scope_mask(const T* x1, const T* x2, int h, int w,
                                const SsimConstants& k = {}) {
  WindowStatsMap m = window_stats(x1, x2, h, w, k);
  std::vector<uint8_t> mask(m.mean_x.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = m.var_x[i] >= m.var_y[i] ? 1 : 0;
  }
  return mask;
}

/// Per-window objective: SSIM of the fused image against whichever source has
/// the larger local standard deviation in that window.
template <typename T>
std::vector<double> scope(const T* x1, const T* x2, const T* yhat, int h,
                          int w, const SsimConstants& k = {}) {
  const std::vector<uint8_t> mask = scope_mask(x1, x2, h, w, k);
  const std::vector<double> s1 =
      ssim_per_window(window_stats(x1, yhat, h, w, k), k);
  const std::vector<double> s2 =
      ssim_per_window(window_stats(x2, yhat, h, w, k), k);
  std::vector<double> out(mask.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = mask[i] ? s1[i] : s2[i];
  }
  return out;
}

template <typename T>
std::vector<double> scope(const TensorT<T>& x1, const TensorT<T>& x2,
                          const TensorT<T>& yhat, const SsimConstants& k = {}) {
  if (!(x1.shape() == x2.shape()) || !(x1.shape() == yhat.shape()) ||
      x1.shape().n != 1 || x1.shape().c != 1) {
    throw std::invalid_argument("scope: expected three equal 1x1xHxW images");
  }
  return scope(x1.data().data(), x2.data().data(), yhat.data().data(),
               static_cast<int>(x1.shape().h), static_cast<int>(x1.shape().w),
               k);
}

namespace detail {

/// Cached forward state for one batch sample of the fusion loss.
struct ScopeSample {
  std::vector<uint8_t> mask;
  WindowStatsMap vs1;  // stats of (x1, yhat)
  WindowStatsMap vs2;  // stats of (x2, yhat)
};

}  // namespace detail

/// Training loss over a batch of registered image pairs and their fused
/// prediction: mean over samples of 1 - mean_w Scope(x1, x2, yhat | w).
/// Scalar in [0, 2]; zero iff every selected window matches exactly.
///
/// Differentiable with respect to yhat only; x1 and x2 act as constants, so
/// the window selection is a fixed mask for the whole step. The gradient
/// goes through the mean, variance and covariance of each window analytically:
/// with P pixels per window, S = (a1*a2)/(b1*b2) and upstream z,
///   dS/dy_j = (2/P) * [ (mx*a2 + a1*(x_j-mx)) / (b1*b2)
///                       - S * (my/b1 + (y_j-my)/b2) ].
template <typename T>
TensorT<T> fusion_loss(GraphT<T>& g, const TensorT<T>& x1,
                       const TensorT<T>& x2, const TensorT<T>& yhat,
                       const SsimConstants& k = {}) {
  k.validate();
  const TensorShape& s = yhat.shape();
  if (!(x1.shape() == s) || !(x2.shape() == s)) {
    throw std::invalid_argument("fusion_loss: shape mismatch, sources " +
                                x1.shape().str() + "/" + x2.shape().str() +
                                " vs fused " + s.str());
  }
  if (s.c != 1) {
    throw std::invalid_argument("fusion_loss: expected single-channel images");
  }
  const int h = static_cast<int>(s.h);
  const int w = static_cast<int>(s.w);
  if (h < k.window || w < k.window) {
    throw std::invalid_argument("fusion_loss: image smaller than window");
  }
  if (!x1.all_finite() || !x2.all_finite() || !yhat.all_finite()) {
    throw std::invalid_argument("fusion_loss: non-finite values rejected");
  }

  const int64_t batch = s.n;
  const int64_t plane = s.h * s.w;
  auto samples = std::make_shared<std::vector<detail::ScopeSample>>();
  samples->reserve(static_cast<size_t>(batch));

  double total = 0.0;
  for (int64_t b = 0; b < batch; ++b) {
    const T* p1 = x1.data().data() + b * plane;
    const T* p2 = x2.data().data() + b * plane;
    const T* pf = yhat.data().data() + b * plane;
    detail::ScopeSample sample;
    sample.mask = scope_mask(p1, p2, h, w, k);
    sample.vs1 = window_stats(p1, pf, h, w, k);
    sample.vs2 = window_stats(p2, pf, h, w, k);
    double acc = 0.0;
    for (size_t i = 0; i < sample.mask.size(); ++i) {
      const WindowStatsMap& m = sample.mask[i] ? sample.vs1 : sample.vs2;
      acc += detail::ssim_from_moments(m.mean_x[i], m.mean_y[i], m.var_x[i],
                                       m.var_y[i], m.cov_xy[i], k);
    }
    total += 1.0 - acc / static_cast<double>(sample.mask.size());
    samples->push_back(std::move(sample));
  }
  TensorT<T> out =
      TensorT<T>::scalar_value(static_cast<T>(total / batch));

  if (g.recording()) {
    TensorT<T> tx1 = x1, tx2 = x2, ty = yhat;
    g.record({ty}, out, [tx1, tx2, ty, out, samples, k]() mutable {
      if (!ty.on_grad_path()) return;
      const TensorShape& s = ty.shape();
      const int h = static_cast<int>(s.h);
      const int w = static_cast<int>(s.w);
      const int win = k.window;
      const double p_count = static_cast<double>(win) * win;
      const int64_t plane = s.h * s.w;
      const double upstream = static_cast<double>(out.grad()[0]);
      auto yg = ty.grad_buffer();
      for (int64_t b = 0; b < s.n; ++b) {
        const detail::ScopeSample& sample = (*samples)[static_cast<size_t>(b)];
        const int64_t n_win = static_cast<int64_t>(sample.mask.size());
        // d(total loss)/dS_w = -upstream / (batch * windows-per-sample)
        const double coeff =
            -upstream / (static_cast<double>(s.n) * n_win);
        const T* px1 = tx1.data().data() + b * plane;
        const T* px2 = tx2.data().data() + b * plane;
        const T* py = ty.data().data() + b * plane;
        T* pg = yg.data() + b * plane;
        const int cols = w - win + 1;
        for (int64_t i = 0; i < n_win; ++i) {
          const WindowStatsMap& m = sample.mask[i] ? sample.vs1 : sample.vs2;
          const T* src = sample.mask[i] ? px1 : px2;
          const double mx = m.mean_x[i];
          const double my = m.mean_y[i];
          const double a1 = 2.0 * mx * my + k.c1;
          const double a2 = 2.0 * m.cov_xy[i] + k.c2;
          const double b1 = mx * mx + my * my + k.c1;
          const double b2 = m.var_x[i] + m.var_y[i] + k.c2;
          const double inv_b1b2 = 1.0 / (b1 * b2);
          const double ssim = a1 * a2 * inv_b1b2;
          const double base = coeff * 2.0 / p_count;
          const int wy = static_cast<int>(i / cols);
          const int wx = static_cast<int>(i % cols);
          for (int dy = 0; dy < win; ++dy) {
            const int64_t row = static_cast<int64_t>(wy + dy) * w + wx;
            for (int dx = 0; dx < win; ++dx) {
              const double xj = static_cast<double>(src[row + dx]);
              const double yj = static_cast<double>(py[row + dx]);
              const double ds =
                  (mx * a2 + a1 * (xj - mx)) * inv_b1b2 -
                  ssim * (my / b1 + (yj - my) / b2);
              pg[row + dx] += static_cast<T>(base * ds);
            }
          }
        }
      }
    });
  }
  return out;
}

/// Mean windowed SSIM of two images, the score counterpart of the loss.
template <typename T>
double ssim_mean(const T* a, const T* b, int h, int w,
                 const SsimConstants& k = {}) {
  const std::vector<double> s = ssim_per_window(window_stats(a, b, h, w, k), k);
  double acc = 0.0;
  for (double v : s) acc += v;
  return acc / static_cast<double>(s.size());
}

}  // namespace mfuse
