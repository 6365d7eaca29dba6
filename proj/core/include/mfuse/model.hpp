#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfuse/graph.hpp"
#include "mfuse/tensor.hpp"

namespace mfuse {

/// Width and per-branch depths of the fusion network. Defaults are the
/// full-size model; tiny() is a first-class preset for fast CPU tests.
struct FusionNetConfig {
  int channels = 64;
  int d1 = 5;  // layers in each source feature branch
  int d2 = 6;  // layers in the averaged-input feature branch
  int d3 = 7;  // layers in the reconstruction stack
  float lrelu_slope = 0.2f;
  uint64_t seed = 1;

  static FusionNetConfig tiny() {
    FusionNetConfig c;
    c.channels = 8;
    c.d1 = 2;
    c.d2 = 3;
    c.d3 = 3;
    return c;
  }

  void validate() const {
    if (channels < 1) throw std::invalid_argument("channels must be >= 1");
    if (d1 < 1 || d2 < 1 || d3 < 1) {
      throw std::invalid_argument("branch depths must be >= 1");
    }
    if (!(lrelu_slope > 0.0f && lrelu_slope < 1.0f)) {
      throw std::invalid_argument("lrelu_slope must be in (0,1)");
    }
  }

  bool operator==(const FusionNetConfig&) const = default;
};

/// All learnable parameters. The two source branches, the average branch and
/// the reconstruction stack have distinct storage; nothing is shared.
///
/// Serialization order (and the weight-init draw order) is fixed:
///   stem1, branch1[0..d1), post1,
///   stem2, branch2[0..d1), post2,
///   stem_avg, branch_avg[0..d2),
///   recon[0..d3)
/// with "<name>.w" before "<name>.b" for each layer.
template <typename T>
struct FusionNetWeightsT {
  FusionNetConfig config;
  ConvParamsT<T> stem1, stem2, stem_avg;           // 1 -> C
  std::vector<ConvParamsT<T>> branch1, branch2;    // d1 x (C -> C)
  std::vector<ConvParamsT<T>> branch_avg;          // d2 x (C -> C)
  ConvParamsT<T> post1, post2;                     // C -> C, no activation
  std::vector<ConvParamsT<T>> recon;               // C -> C ... C -> 1

  /// Visits every parameter tensor in serialization order as
  /// f(name, tensor). Layer names look like "branch1.0", "recon.2".
  template <typename F>
  void for_each_param(F&& f) {
    auto layer = [&](const std::string& name, ConvParamsT<T>& p) {
      f(name + ".w", p.weight);
      f(name + ".b", p.bias);
    };
    layer("stem1", stem1);
    for (size_t i = 0; i < branch1.size(); ++i) {
      layer("branch1." + std::to_string(i), branch1[i]);
    }
    layer("post1", post1);
    layer("stem2", stem2);
    for (size_t i = 0; i < branch2.size(); ++i) {
      layer("branch2." + std::to_string(i), branch2[i]);
    }
    layer("post2", post2);
    layer("stem_avg", stem_avg);
    for (size_t i = 0; i < branch_avg.size(); ++i) {
      layer("branch_avg." + std::to_string(i), branch_avg[i]);
    }
    for (size_t i = 0; i < recon.size(); ++i) {
      layer("recon." + std::to_string(i), recon[i]);
    }
  }

  template <typename F>
  void for_each_param(F&& f) const {
    const_cast<FusionNetWeightsT*>(this)->for_each_param(
        [&](const std::string& name, TensorT<T>& t) {
          f(name, static_cast<const TensorT<T>&>(t));
        });
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for_each_param([&](const std::string&, const TensorT<T>& t) {
      n += t.shape().numel();
    });
    return n;
  }

  void set_requires_grad(bool on) {
    for_each_param(
        [&](const std::string&, TensorT<T>& t) { t.set_requires_grad(on); });
  }

  /// Drops all gradient buffers so the next backward starts from zero.
  void clear_grads() {
    for_each_param([&](const std::string&, TensorT<T>& t) { t.drop_grad(); });
  }

  bool all_finite() const {
    bool ok = true;
    for_each_param([&](const std::string&, const TensorT<T>& t) {
      ok = ok && t.all_finite();
    });
    return ok;
  }
};

using FusionNetWeights = FusionNetWeightsT<float>;

/// Random initialization: weights ~ N(0, 2/fan_in) with fan_in = inC*3*3,
/// biases zero. Draws happen in serialization order, so a seed pins every
/// parameter bit-exactly.
template <typename T>
FusionNetWeightsT<T> fusion_net_init(const FusionNetConfig& cfg) {
  cfg.validate();
  std::mt19937 rng(static_cast<uint32_t>(cfg.seed ^ (cfg.seed >> 32)));
  auto make = [&](int64_t in_c, int64_t out_c) {
    ConvParamsT<T> p;
    p.weight = TensorT<T>::zeros({out_c, in_c, 3, 3});
    p.bias = TensorT<T>::zeros({1, out_c, 1, 1});
    std::normal_distribution<double> dist(
        0.0, std::sqrt(2.0 / (static_cast<double>(in_c) * 9.0)));
    for (T& v : p.weight.data()) v = static_cast<T>(dist(rng));
    return p;
  };

  const int64_t c = cfg.channels;
  FusionNetWeightsT<T> w;
  w.config = cfg;
  w.stem1 = make(1, c);
  w.branch1.reserve(cfg.d1);
  for (int i = 0; i < cfg.d1; ++i) w.branch1.push_back(make(c, c));
  w.post1 = make(c, c);
  w.stem2 = make(1, c);
  w.branch2.reserve(cfg.d1);
  for (int i = 0; i < cfg.d1; ++i) w.branch2.push_back(make(c, c));
  w.post2 = make(c, c);
  w.stem_avg = make(1, c);
  w.branch_avg.reserve(cfg.d2);
  for (int i = 0; i < cfg.d2; ++i) w.branch_avg.push_back(make(c, c));
  w.recon.reserve(cfg.d3);
  for (int i = 0; i < cfg.d3; ++i) {
    w.recon.push_back(make(c, i + 1 == cfg.d3 ? 1 : c));
  }
  return w;
}

/// Full forward pass, fully convolutional: two source branches with stems,
/// an average branch fed (x1+x2)/2, additive feature fusion, then the
/// reconstruction stack ending in sigmoid. Output shape equals input shape,
/// every pixel strictly inside (0,1).
template <typename T>
TensorT<T> fusion_net_forward(GraphT<T>& g, const FusionNetWeightsT<T>& w,
                              const TensorT<T>& x1, const TensorT<T>& x2) {
  if (!(x1.shape() == x2.shape())) {
    throw std::invalid_argument("forward: source shapes differ, " +
                                x1.shape().str() + " vs " + x2.shape().str());
  }
  if (x1.shape().c != 1) {
    throw std::invalid_argument("forward: sources must be single-channel");
  }
  const T slope = static_cast<T>(w.config.lrelu_slope);

  auto source_features = [&](const TensorT<T>& x, const ConvParamsT<T>& stem,
                             const std::vector<ConvParamsT<T>>& branch,
                             const ConvParamsT<T>& post) {
    TensorT<T> f = g.leaky_relu(g.conv2d(x, stem), slope);
    for (const ConvParamsT<T>& layer : branch) {
      f = g.leaky_relu(g.conv2d(f, layer), slope);
    }
    return g.conv2d(f, post);
  };

  TensorT<T> f1 = source_features(x1, w.stem1, w.branch1, w.post1);
  TensorT<T> f2 = source_features(x2, w.stem2, w.branch2, w.post2);
  TensorT<T> fused = g.add(f1, f2);

  TensorT<T> avg = g.scale(g.add(x1, x2), static_cast<T>(0.5));
  TensorT<T> a = g.leaky_relu(g.conv2d(avg, w.stem_avg), slope);
  for (const ConvParamsT<T>& layer : w.branch_avg) {
    a = g.leaky_relu(g.conv2d(a, layer), slope);
  }

  TensorT<T> merged = g.add(fused, a);
  for (size_t i = 0; i + 1 < w.recon.size(); ++i) {
    merged = g.leaky_relu(g.conv2d(merged, w.recon[i]), slope);
  }
  return g.sigmoid(g.conv2d(merged, w.recon.back()));
}

}  // namespace mfuse
