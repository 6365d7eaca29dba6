#pragma once

#include <algorithm>
#include <cstdint>

#include "mfuse/tensor.hpp"

namespace mfuse {

// Plain 3x3 stride-1 convolution kernels with zero padding of 1 on each side,
// so spatial dimensions are preserved. Layout is row-major (N, C, H, W).
// The loops are arranged as shift-and-accumulate passes over whole rows so the
// innermost loop is a contiguous axpy the compiler can vectorize.

/// out[n,o,y,x] = bias[o] + sum_{c,ky,kx} in[n,c,y+ky-1,x+kx-1] * w[o,c,ky,kx]
/// (out-of-bounds input reads contribute zero).
template <typename T>
void conv2d_forward(const TensorShape& xs, const T* x, int64_t out_c,
                    const T* w, const T* b, T* y) {
  const int64_t N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  const int64_t plane = H * W;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t oc = 0; oc < out_c; ++oc) {
      T* yp = y + (n * out_c + oc) * plane;
      std::fill(yp, yp + plane, b[oc]);
      const T* wb = w + oc * C * 9;
      for (int64_t ic = 0; ic < C; ++ic) {
        const T* xp = x + (n * C + ic) * plane;
        const T* k = wb + ic * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int64_t dy = ky - 1;
          const int64_t y0 = std::max<int64_t>(0, -dy);
          const int64_t y1 = std::min<int64_t>(H, H - dy);
          for (int kx = 0; kx < 3; ++kx) {
            const int64_t dx = kx - 1;
            const T wv = k[ky * 3 + kx];
            const int64_t x0 = std::max<int64_t>(0, -dx);
            const int64_t x1 = std::min<int64_t>(W, W - dx);
            for (int64_t yy = y0; yy < y1; ++yy) {
              T* yr = yp + yy * W;
              const T* xr = xp + (yy + dy) * W + dx;
              for (int64_t xx = x0; xx < x1; ++xx) yr[xx] += wv * xr[xx];
            }
          }
        }
      }
    }
  }
}

/// dL/dIn for conv2d_forward: din[n,c,y+ky-1,x+kx-1] += w[o,c,ky,kx] * dout[n,o,y,x].
/// Accumulates into din (caller zero-initializes or chains).
template <typename T>
void conv2d_backward_input(const TensorShape& xs, int64_t out_c, const T* w,
                           const T* dout, T* din) {
  const int64_t N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  const int64_t plane = H * W;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t oc = 0; oc < out_c; ++oc) {
      const T* gp = dout + (n * out_c + oc) * plane;
      const T* wb = w + oc * C * 9;
      for (int64_t ic = 0; ic < C; ++ic) {
        T* dp = din + (n * C + ic) * plane;
        const T* k = wb + ic * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int64_t dy = ky - 1;
          const int64_t y0 = std::max<int64_t>(0, -dy);
          const int64_t y1 = std::min<int64_t>(H, H - dy);
          for (int kx = 0; kx < 3; ++kx) {
            const int64_t dx = kx - 1;
            const T wv = k[ky * 3 + kx];
            const int64_t x0 = std::max<int64_t>(0, -dx);
            const int64_t x1 = std::min<int64_t>(W, W - dx);
            for (int64_t yy = y0; yy < y1; ++yy) {
              const T* gr = gp + yy * W;
              T* dr = dp + (yy + dy) * W + dx;
              for (int64_t xx = x0; xx < x1; ++xx) dr[xx] += wv * gr[xx];
            }
          }
        }
      }
    }
  }
}

/// dL/dW and dL/dBias for conv2d_forward. Accumulates into dw / db.
template <typename T>
void conv2d_backward_params(const TensorShape& xs, const T* x, int64_t out_c,
                            const T* dout, T* dw, T* db) {
  const int64_t N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  const int64_t plane = H * W;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t oc = 0; oc < out_c; ++oc) {
      const T* gp = dout + (n * out_c + oc) * plane;
      T bacc = T(0);
      for (int64_t i = 0; i < plane; ++i) bacc += gp[i];
      db[oc] += bacc;
      T* dwb = dw + oc * C * 9;
      for (int64_t ic = 0; ic < C; ++ic) {
        const T* xp = x + (n * C + ic) * plane;
        T* dk = dwb + ic * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int64_t dy = ky - 1;
          const int64_t y0 = std::max<int64_t>(0, -dy);
          const int64_t y1 = std::min<int64_t>(H, H - dy);
          for (int kx = 0; kx < 3; ++kx) {
            const int64_t dx = kx - 1;
            const int64_t x0 = std::max<int64_t>(0, -dx);
            const int64_t x1 = std::min<int64_t>(W, W - dx);
            T acc = T(0);
            for (int64_t yy = y0; yy < y1; ++yy) {
              const T* gr = gp + yy * W;
              const T* xr = xp + (yy + dy) * W + dx;
              for (int64_t xx = x0; xx < x1; ++xx) acc += gr[xx] * xr[xx];
            }
            dk[ky * 3 + kx] += acc;
          }
        }
      }
    }
  }
}

}  // namespace mfuse
