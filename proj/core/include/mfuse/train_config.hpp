#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "mfuse/model.hpp"

namespace mfuse {

/// Every knob of the training recipe. Defaults reproduce the full-scale
/// setup; tests override toward the tiny preset.
struct TrainConfig {
  std::string data_dir;
  std::string out_dir = ".";
  int patch_size = 64;
  int64_t num_patches = 50000;
  int iters_per_epoch = 400;
  int epochs = 1;
  int batch_size = 16;
  double lr0 = 1e-3;
  double lr_decay_rate = 0.96;
  int64_t lr_decay_steps = 1000;
  double weight_decay = 1e-4;
  uint64_t seed = 1;
  std::string optimizer = "adam";  // "adam" or "sgd"
  int64_t checkpoint_every = 100;
  FusionNetConfig model;

  int64_t total_steps() const {
    return static_cast<int64_t>(epochs) * iters_per_epoch;
  }

  void validate() const {
    model.validate();
    if (patch_size < 7) {
      throw std::invalid_argument(
          "patch_size must be >= 7 so the loss window fits");
    }
    if (num_patches < 1) throw std::invalid_argument("num_patches < 1");
    if (iters_per_epoch < 1 || epochs < 1 || batch_size < 1) {
      throw std::invalid_argument("counts must be positive");
    }
    if (!(lr0 > 0.0 && lr0 <= 1.0)) {
      throw std::invalid_argument("lr0 must be in (0,1]");
    }
    if (!(lr_decay_rate > 0.0 && lr_decay_rate <= 1.0)) {
      throw std::invalid_argument("lr_decay_rate must be in (0,1]");
    }
    if (lr_decay_steps < 1) throw std::invalid_argument("lr_decay_steps < 1");
    if (!(weight_decay >= 0.0 && weight_decay <= 1.0)) {
      throw std::invalid_argument("weight_decay must be in [0,1]");
    }
    if (checkpoint_every < 1) {
      throw std::invalid_argument("checkpoint_every < 1");
    }
    if (optimizer != "adam" && optimizer != "sgd") {
      throw std::invalid_argument("optimizer must be adam or sgd, got \"" +
                                  optimizer + "\"");
    }
  }
};

}  // namespace mfuse
