#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfuse/model.hpp"
#include "mfuse/tensor.hpp"
#include "mfuse/train_config.hpp"

namespace mfuse {

/// Continuously decayed learning rate: lr0 * rate^(step / decay_steps) with
/// a real-valued exponent, no staircase.
inline double lr_at(int64_t step, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.lr_decay_rate,
                            static_cast<double>(step) /
                                static_cast<double>(cfg.lr_decay_steps));
}

/// Adaptive first/second moment buffers, one pair per parameter tensor in
/// serialization order. Empty vectors mean "fresh optimizer".
struct AdamState {
  std::vector<Tensor> m, v;

  bool initialized() const { return !m.empty(); }

  void init_like(FusionNetWeights& w) {
    m.clear();
    v.clear();
    w.for_each_param([&](const std::string&, Tensor& t) {
      m.push_back(Tensor::zeros(t.shape()));
      v.push_back(Tensor::zeros(t.shape()));
    });
  }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One optimizer update from the gradients currently held by the weights.
/// Decay is decoupled: every parameter shrinks by (1 - lr*wd) before the
/// gradient step, so zero gradients still decay. `step` is 1-based and
/// drives bias correction. Parameters without a gradient buffer are treated
/// as zero-gradient.
inline void adam_step(FusionNetWeights& w, AdamState& st, double lr,
                      double weight_decay, int64_t step) {
  if (!st.initialized()) st.init_like(w);
  if (step < 1) throw std::invalid_argument("adam_step: step must be >= 1");
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  const float decay = static_cast<float>(1.0 - lr * weight_decay);
  size_t idx = 0;
  w.for_each_param([&](const std::string&, Tensor& t) {
    std::span<float> p = t.data();
    std::span<float> m = st.m[idx].data();
    std::span<float> v = st.v[idx].data();
    ++idx;
    const bool has_g = t.has_grad();
    const std::span<const float> g =
        has_g ? t.grad() : std::span<const float>{};
    for (size_t i = 0; i < p.size(); ++i) {
      const float gi = has_g ? g[i] : 0.0f;
      m[i] = static_cast<float>(kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gi);
      v[i] = static_cast<float>(kAdamBeta2 * v[i] +
                                (1.0 - kAdamBeta2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] = decay * p[i] -
             static_cast<float>(lr * mhat / (std::sqrt(vhat) + kAdamEps));
    }
  });
}

/// Plain SGD with the same decoupled decay, for tests that need the update
/// rule to be transparent.
inline void sgd_step(FusionNetWeights& w, double lr, double weight_decay) {
  const float decay = static_cast<float>(1.0 - lr * weight_decay);
  w.for_each_param([&](const std::string&, Tensor& t) {
    std::span<float> p = t.data();
    const bool has_g = t.has_grad();
    const std::span<const float> g =
        has_g ? t.grad() : std::span<const float>{};
    for (size_t i = 0; i < p.size(); ++i) {
      const float gi = has_g ? g[i] : 0.0f;
      p[i] = decay * p[i] - static_cast<float>(lr) * gi;
    }
  });
}

}  // namespace mfuse
