#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfuse/errors.hpp"
#include "mfuse/model.hpp"
#include "mfuse/optim.hpp"
#include "mfuse/train_config.hpp"

namespace mfuse {

/// Unit of persistence between train and fuse/eval. `step` counts completed
/// optimizer updates; loss_history[i] is the pre-update loss of step i+1.
/// `opt` is empty for checkpoints not meant to be resumed.
struct Checkpoint {
  FusionNetWeights weights;
  TrainConfig config;
  int64_t step = 0;
  std::vector<float> loss_history;
  AdamState opt;
};

/// File layout (version 1): a line-oriented text header fixing the format
/// version, every TrainConfig and model field and the step count, then a
/// `loss_history <n>` line followed by n raw little-endian float32 values,
/// then `tensors <n>` followed by n records of
///   `tensor <name> <N> <C> <H> <W>\n` + N*C*H*W raw little-endian float32.
/// Weight tensors come first in their serialization order; optimizer moments
/// follow as opt.m.<name> / opt.v.<name>. Round-trip is bit-exact.
///
/// Writing goes through a sibling temp file and an atomic rename, so a crash
/// mid-save never leaves a torn file at `path`.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws CheckpointError on any structural problem (bad magic, missing or
/// misshapen tensors, truncation, partial optimizer state).
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mfuse
