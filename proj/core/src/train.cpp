#include "mfuse/train.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>

#include "mfuse/errors.hpp"
#include "mfuse/graph.hpp"
#include "mfuse/image_io.hpp"
#include "mfuse/ssim.hpp"

namespace fs = std::filesystem;

namespace mfuse {
namespace {

bool supported_ext(const std::string& ext) {
  return ext == "png" || ext == "pgm" || ext == "ppm";
}

std::mt19937 pool_rng(uint64_t seed, int64_t k) {
  std::seed_seq seq{static_cast<uint32_t>(seed),
                    static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(k),
                    static_cast<uint32_t>(static_cast<uint64_t>(k) >> 32)};
  return std::mt19937(seq);
}

std::vector<size_t> eligible_pairs(const std::vector<ImagePair>& pairs,
                                   int size) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].a.width >= size && pairs[i].a.height >= size) {
      idx.push_back(i);
    }
  }
  return idx;
}

PatchPair crop_at(const ImagePair& pair, int size, int y0, int x0) {
  PatchPair p{GrayImage(size, size), GrayImage(size, size)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      p.p1.at(y, x) = pair.a.at(y0 + y, x0 + x);
      p.p2.at(y, x) = pair.b.at(y0 + y, x0 + x);
    }
  }
  return p;
}

PatchPair patch_from_pool(const std::vector<ImagePair>& pairs,
                          const std::vector<size_t>& eligible, int size,
                          uint64_t seed, int64_t k) {
  if (eligible.empty()) {
    throw InputMismatchError("no image pair is at least " +
                             std::to_string(size) + "x" +
                             std::to_string(size));
  }
  std::mt19937 rng = pool_rng(seed, k);
  const ImagePair& pair =
      pairs[eligible[std::uniform_int_distribution<size_t>(
          0, eligible.size() - 1)(rng)]];
  const int y0 = std::uniform_int_distribution<int>(
      0, pair.a.height - size)(rng);
  const int x0 =
      std::uniform_int_distribution<int>(0, pair.a.width - size)(rng);
  return crop_at(pair, size, y0, x0);
}

}  // namespace

std::vector<ImagePair> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw InputMismatchError(dir + ": not a directory");
  }
  // name -> per-member file path
  std::map<std::string, std::array<std::string, 2>> found;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string stem = e.path().stem().string();
    std::string ext = e.path().extension().string();
    if (!ext.empty()) ext.erase(0, 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (!supported_ext(ext) || stem.size() < 3) continue;
    const std::string tail = stem.substr(stem.size() - 2);
    if (tail != "_1" && tail != "_2") continue;
    found[stem.substr(0, stem.size() - 2)][tail == "_1" ? 0 : 1] =
        e.path().string();
  }
  std::vector<ImagePair> pairs;
  for (const auto& [name, members] : found) {
    if (members[0].empty() || members[1].empty()) {
      const int have = members[0].empty() ? 2 : 1;
      throw InputMismatchError(
          dir + ": pair \"" + name + "\" has only member _" +
          std::to_string(have) + " (" + members[have - 1] + ")");
    }
    ImagePair p;
    p.name = name;
    p.a = load_gray(members[0]);
    p.b = load_gray(members[1]);
    if (!p.a.same_size(p.b)) {
      throw InputMismatchError(
          members[0] + " is " + std::to_string(p.a.width) + "x" +
          std::to_string(p.a.height) + " but " + members[1] + " is " +
          std::to_string(p.b.width) + "x" + std::to_string(p.b.height));
    }
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) {
    throw InputMismatchError(dir + ": no <name>_1/<name>_2 image pairs found");
  }
  // std::map already iterates lexicographically; keep the order explicit
  std::sort(pairs.begin(), pairs.end(),
            [](const ImagePair& a, const ImagePair& b) {
              return a.name < b.name;
            });
  return pairs;
}

PatchPair patch_at(const std::vector<ImagePair>& pairs, int size,
                   uint64_t seed, int64_t k) {
  return patch_from_pool(pairs, eligible_pairs(pairs, size), size, seed, k);
}

PatchSet sample_patches(const std::vector<ImagePair>& pairs, int64_t n,
                        int size, uint64_t seed) {
  const std::vector<size_t> eligible = eligible_pairs(pairs, size);
  if (n > 0 && eligible.empty()) {
    throw InputMismatchError("no image pair is at least " +
                             std::to_string(size) + "x" +
                             std::to_string(size));
  }
  PatchSet set;
  set.excluded_pairs = static_cast<int>(pairs.size() - eligible.size());
  set.patches.reserve(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) {
    set.patches.push_back(patch_from_pool(pairs, eligible, size, seed, k));
  }
  return set;
}

std::pair<Tensor, Tensor> batch_for_step(const std::vector<ImagePair>& pairs,
                                         const TrainConfig& cfg, int64_t t) {
  if (t < 1) throw std::invalid_argument("batch_for_step: step must be >= 1");
  const std::vector<size_t> eligible = eligible_pairs(pairs, cfg.patch_size);
  const int64_t pool = cfg.num_patches;
  const int s = cfg.patch_size;
  Tensor x1 = Tensor::zeros({cfg.batch_size, 1, s, s});
  Tensor x2 = Tensor::zeros({cfg.batch_size, 1, s, s});
  const int64_t plane = static_cast<int64_t>(s) * s;
  for (int i = 0; i < cfg.batch_size; ++i) {
    const int64_t k = ((t - 1) * cfg.batch_size + i) % pool;
    const PatchPair p =
        patch_from_pool(pairs, eligible, s, cfg.seed, k);
    std::copy(p.p1.pix.begin(), p.p1.pix.end(),
              x1.data().begin() + i * plane);
    std::copy(p.p2.pix.begin(), p.p2.pix.end(),
              x2.data().begin() + i * plane);
  }
  return {x1, x2};
}

float train_step(FusionNetWeights& w, AdamState& opt, const Tensor& x1,
                 const Tensor& x2, int64_t t, const TrainConfig& cfg) {
  if (t < 1) throw std::invalid_argument("train_step: step must be >= 1");
  w.set_requires_grad(true);
  Graph g;
  const Tensor yhat = fusion_net_forward(g, w, x1, x2);
  const Tensor loss = fusion_loss(g, x1, x2, yhat);
  const float loss_v = loss.scalar();
  if (!std::isfinite(loss_v)) {
    throw std::runtime_error("step " + std::to_string(t) +
                             ": loss is non-finite (" +
                             std::to_string(loss_v) + "), aborting");
  }
  g.backward(loss);
  const double lr = lr_at(t - 1, cfg);
  if (cfg.optimizer == "adam") {
    adam_step(w, opt, lr, cfg.weight_decay, t);
  } else {
    sgd_step(w, lr, cfg.weight_decay);
  }
  w.clear_grads();
  return loss_v;
}

Checkpoint train(const TrainConfig& cfg, const Checkpoint* resume_from,
                 const ProgressFn& progress) {
  cfg.validate();
  const std::vector<ImagePair> pairs = load_dataset(cfg.data_dir);

  Checkpoint ckpt;
  ckpt.config = cfg;
  if (resume_from) {
    if (!(resume_from->config.model == cfg.model)) {
      throw CheckpointError(
          "resume: checkpoint model does not match the configured one");
    }
    ckpt.weights = resume_from->weights;
    ckpt.step = resume_from->step;
    ckpt.loss_history = resume_from->loss_history;
    ckpt.opt = resume_from->opt;
  } else {
    ckpt.weights = fusion_net_init<float>(cfg.model);
  }

  fs::create_directories(cfg.out_dir);
  const std::string ckpt_path =
      (fs::path(cfg.out_dir) / "checkpoint_latest.mfc").string();
  const std::string log_path = (fs::path(cfg.out_dir) / "loss.log").string();
  std::ofstream log(log_path, resume_from ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error(log_path + ": cannot open loss log");

  const int64_t total = cfg.total_steps();
  for (int64_t t = ckpt.step + 1; t <= total; ++t) {
    auto [x1, x2] = batch_for_step(pairs, cfg, t);
    const float loss = train_step(ckpt.weights, ckpt.opt, x1, x2, t, cfg);
    const double lr = lr_at(t - 1, cfg);
    ckpt.step = t;
    ckpt.loss_history.push_back(loss);
    char line[96];
    std::snprintf(line, sizeof(line), "%lld\t%.9g\t%.9g\n",
                  static_cast<long long>(t), lr, static_cast<double>(loss));
    log << line;
    log.flush();
    if (progress) progress(t, lr, loss);
    if (t % cfg.checkpoint_every == 0 && t != total) {
      save_checkpoint(ckpt_path, ckpt);
    }
  }
  save_checkpoint(ckpt_path, ckpt);
  return ckpt;
}

}  // namespace mfuse
