#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mfuse/checkpoint.hpp"
#include "mfuse/image.hpp"
#include "mfuse/model.hpp"
#include "mfuse/optim.hpp"
#include "mfuse/train_config.hpp"

namespace mfuse {

/// Registered multi-focus pair, both members reduced to luminance in [0,1].
struct ImagePair {
  std::string name;
  GrayImage a, b;
};

/// Loads every `<name>_1.<ext>` / `<name>_2.<ext>` pair (ext: png, pgm, ppm)
/// from the directory, luminance only, sorted by name. Throws
/// InputMismatchError when a member is missing or the two members differ in
/// size (message names both files), and when the directory yields no pairs.
std::vector<ImagePair> load_dataset(const std::string& dir);

/// Aligned crops from the same origin of both members of one pair.
struct PatchPair {
  GrayImage p1, p2;
};

struct PatchSet {
  std::vector<PatchPair> patches;
  int excluded_pairs = 0;  // pairs smaller than the patch size, skipped
};

/// Patch `k` of the virtual training pool: pair index and crop origin drawn
/// uniformly from a counter-based generator seeded with (seed, k), so any
/// patch is reproducible in isolation. Pairs smaller than `size` are not
/// eligible.
PatchPair patch_at(const std::vector<ImagePair>& pairs, int size,
                   uint64_t seed, int64_t k);

/// First n pool entries. Throws when no pair is large enough.
PatchSet sample_patches(const std::vector<ImagePair>& pairs, int64_t n,
                        int size, uint64_t seed);

/// Stacks the batch for 1-based step `t`: pool entries
/// (t-1)*batch_size + i (mod num_patches), shaped [batch,1,size,size].
std::pair<Tensor, Tensor> batch_for_step(const std::vector<ImagePair>& pairs,
                                         const TrainConfig& cfg, int64_t t);

/// One optimizer update on one batch; `t` is the 1-based global step.
/// Returns the pre-update loss. The learning rate follows lr_at(t-1), so the
/// first step runs at exactly lr0. Throws std::runtime_error naming the step
/// when the loss comes out non-finite.
float train_step(FusionNetWeights& w, AdamState& opt, const Tensor& x1,
                 const Tensor& x2, int64_t t, const TrainConfig& cfg);

using ProgressFn =
    std::function<void(int64_t step, double lr, float loss)>;

/// Full training run: epochs * iters_per_epoch steps from scratch, or
/// continuation of `resume_from` (its step counter, weights, optimizer
/// moments and loss history carry over; remaining steps come from cfg).
/// Writes `<out_dir>/loss.log` (one `step<TAB>lr<TAB>loss` line per step,
/// appended on resume) and `<out_dir>/checkpoint_latest.mfc` every
/// checkpoint_every steps and at the end.
Checkpoint train(const TrainConfig& cfg, const Checkpoint* resume_from = nullptr,
                 const ProgressFn& progress = nullptr);

}  // namespace mfuse
