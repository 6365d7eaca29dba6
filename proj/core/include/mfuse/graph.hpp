#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfuse/conv.hpp"
#include "mfuse/tensor.hpp"

namespace mfuse {

/// Define-by-run computation graph. Ops execute eagerly and, while recording
/// is enabled, append a node that can replay their gradient. backward() walks
/// the recorded nodes once, in reverse execution order, accumulating into the
/// grad buffers of every tensor on a path to a requires_grad leaf.
///
/// A graph instance is single-threaded; independent graphs may run in
/// parallel threads.
template <typename T>
class GraphT {
 public:
  explicit GraphT(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  size_t size() const { return nodes_.size(); }

  TensorT<T> conv2d(const TensorT<T>& in, const ConvParamsT<T>& p) {
    p.validate();
    check_finite(in, "conv2d input");
    check_finite(p.weight, "conv2d weight");
    check_finite(p.bias, "conv2d bias");
    const TensorShape& xs = in.shape();
    if (xs.c != p.in_channels()) {
      throw std::invalid_argument(
          "conv2d: input has " + std::to_string(xs.c) +
          " channels but weights expect " + std::to_string(p.in_channels()));
    }
    if (xs.h < 1 || xs.w < 1) {
      throw std::invalid_argument("conv2d: empty spatial dims " + xs.str());
    }
    const int64_t oc = p.out_channels();
    TensorT<T> out = TensorT<T>::zeros({xs.n, oc, xs.h, xs.w});
    conv2d_forward(xs, in.data().data(), oc, p.weight.data().data(),
                   p.bias.data().data(), out.data().data());
    if (recording_) {
      TensorT<T> x = in;
      TensorT<T> w = p.weight;
      TensorT<T> b = p.bias;
      record({x, w, b}, out, [x, w, b, out]() mutable {
        auto g = out.grad();
        const TensorShape& s = x.shape();
        const int64_t noc = w.shape().n;
        if (x.on_grad_path()) {
          conv2d_backward_input(s, noc, w.data().data(), g.data(),
                                x.grad_buffer().data());
        }
        if (w.on_grad_path() || b.on_grad_path()) {
          conv2d_backward_params(s, x.data().data(), noc, g.data(),
                                 w.grad_buffer().data(),
                                 b.grad_buffer().data());
        }
      });
    }
    return out;
  }

  TensorT<T> leaky_relu(const TensorT<T>& in, T negative_slope) {
    if (!(negative_slope > T(0) && negative_slope < T(1))) {
      throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
    }
    check_finite(in, "leaky_relu input");
    TensorT<T> out = TensorT<T>::zeros(in.shape());
    auto src = in.data();
    auto dst = out.data();
    for (size_t i = 0; i < src.size(); ++i) {
      dst[i] = src[i] >= T(0) ? src[i] : negative_slope * src[i];
    }
    if (recording_) {
      TensorT<T> x = in;
      record({x}, out, [x, out, negative_slope]() mutable {
        if (!x.on_grad_path()) return;
        auto g = out.grad();
        auto xv = x.data();
        auto xg = x.grad_buffer();
        for (size_t i = 0; i < xg.size(); ++i) {
          xg[i] += xv[i] >= T(0) ? g[i] : negative_slope * g[i];
        }
      });
    }
    return out;
  }

  TensorT<T> sigmoid(const TensorT<T>& in) {
    check_finite(in, "sigmoid input");
    TensorT<T> out = TensorT<T>::zeros(in.shape());
    auto src = in.data();
    auto dst = out.data();
    // Saturated outputs are nudged off 0 and 1 so downstream code can rely
    // on the open interval.
    const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
    const T lo = std::numeric_limits<T>::min();
    for (size_t i = 0; i < src.size(); ++i) {
      const T v = src[i];
      T s;
      if (v >= T(0)) {
        s = T(1) / (T(1) + std::exp(-v));
      } else {
        const T e = std::exp(v);
        s = e / (T(1) + e);
      }
      dst[i] = std::min(hi, std::max(lo, s));
    }
    if (recording_) {
      TensorT<T> x = in;
      record({x}, out, [x, out]() mutable {
        if (!x.on_grad_path()) return;
        auto g = out.grad();
        auto s = out.data();
        auto xg = x.grad_buffer();
        for (size_t i = 0; i < xg.size(); ++i) {
          xg[i] += g[i] * s[i] * (T(1) - s[i]);
        }
      });
    }
    return out;
  }

  TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (!(a.shape() == b.shape())) {
      throw std::invalid_argument("add: shape mismatch " + a.shape().str() +
                                  " vs " + b.shape().str());
    }
    check_finite(a, "add lhs");
    check_finite(b, "add rhs");
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    auto av = a.data();
    auto bv = b.data();
    auto dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = av[i] + bv[i];
    if (recording_) {
      TensorT<T> ta = a, tb = b;
      record({ta, tb}, out, [ta, tb, out]() mutable {
        auto g = out.grad();
        if (ta.on_grad_path()) {
          auto ga = ta.grad_buffer();
          for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        }
        if (tb.on_grad_path()) {
          auto gb = tb.grad_buffer();
          for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
        }
      });
    }
    return out;
  }

  TensorT<T> scale(const TensorT<T>& a, T k) {
    if (!std::isfinite(k)) {
      throw std::invalid_argument("scale: non-finite factor");
    }
    check_finite(a, "scale input");
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    auto av = a.data();
    auto dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = k * av[i];
    if (recording_) {
      TensorT<T> ta = a;
      record({ta}, out, [ta, out, k]() mutable {
        if (!ta.on_grad_path()) return;
        auto g = out.grad();
        auto ga = ta.grad_buffer();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += k * g[i];
      });
    }
    return out;
  }

  /// Arithmetic mean over all elements, as a 1x1x1x1 tensor.
  TensorT<T> mean_all(const TensorT<T>& a) {
    if (a.numel() == 0) {
      throw std::invalid_argument("mean_all: empty tensor");
    }
    check_finite(a, "mean_all input");
    double acc = 0.0;
    for (T v : a.data()) acc += static_cast<double>(v);
    TensorT<T> out =
        TensorT<T>::scalar_value(static_cast<T>(acc / a.numel()));
    if (recording_) {
      TensorT<T> ta = a;
      record({ta}, out, [ta, out]() mutable {
        if (!ta.on_grad_path()) return;
        const T g = out.grad()[0] / static_cast<T>(ta.numel());
        auto ga = ta.grad_buffer();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
      });
    }
    return out;
  }

  /// Extension point for ops with hand-written gradients (the fusion loss
  /// uses this). backward_fn must accumulate (+=) into parent grad buffers.
  void record(const std::vector<TensorT<T>>& parents, TensorT<T> out,
              std::function<void()> backward_fn) {
    if (!recording_) return;
    bool needs = false;
    for (const TensorT<T>& p : parents) needs = needs || p.on_grad_path();
    if (needs) out.mark_on_grad_path();
    nodes_.push_back(Node{std::move(out), std::move(backward_fn)});
  }

  /// Reverse-mode sweep from a scalar loss. Each recorded node is visited
  /// exactly once; gradients accumulate additively across consumers.
  void backward(const TensorT<T>& loss) {
    if (!recording_) {
      throw std::logic_error("backward: graph was not recording");
    }
    if (ran_backward_) {
      throw std::logic_error("backward: already run on this graph");
    }
    if (loss.numel() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  loss.shape().str());
    }
    ran_backward_ = true;
    TensorT<T> seed = loss;
    seed.grad_buffer()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->out.has_grad() && it->out.on_grad_path()) {
        it->backward_fn();
      }
    }
  }

  /// Drops all recorded nodes (and with them the retained activations).
  void clear() {
    nodes_.clear();
    ran_backward_ = false;
  }

 private:
  struct Node {
    TensorT<T> out;
    std::function<void()> backward_fn;
  };

  static void check_finite(const TensorT<T>& t, const char* what) {
    if (!t.all_finite()) {
      throw std::invalid_argument(std::string(what) +
                                  ": non-finite values rejected");
    }
  }

  std::vector<Node> nodes_;
  bool recording_;
  bool ran_backward_ = false;
};

using Graph = GraphT<float>;

}  // namespace mfuse
