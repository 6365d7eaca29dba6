#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mfuse/checkpoint.hpp"
#include "mfuse/errors.hpp"
#include "test_support.hpp"

using mfuse::Checkpoint;
using mfuse::CheckpointError;
using mfuse::FusionNetConfig;
using mfuse::Tensor;

namespace {

/// Checkpoint with every field off its default and asymmetric tensor
/// contents, so a round trip cannot pass by accident.
Checkpoint make_checkpoint() {
  Checkpoint c;
  c.config.data_dir = "data dir/with spaces";
  c.config.out_dir = "runs/exp 4";
  c.config.patch_size = 16;
  c.config.num_patches = 123;
  c.config.iters_per_epoch = 7;
  c.config.epochs = 3;
  c.config.batch_size = 4;
  c.config.lr0 = 0.00073;
  c.config.lr_decay_rate = 0.93;
  c.config.lr_decay_steps = 250;
  c.config.weight_decay = 3.1e-5;
  c.config.optimizer = "sgd";
  c.config.checkpoint_every = 9;
  c.config.seed = 0xdeadbeefcafeULL;
  c.config.model = FusionNetConfig::tiny();
  c.config.model.seed = 77;
  c.config.model.lrelu_slope = 0.15f;
  c.weights = mfuse::fusion_net_init<float>(c.config.model);
  c.step = 42;
  c.loss_history = {0.9f, 0.8125f, 1.5e-7f, 0.25f};

  int64_t i = 0;
  c.weights.for_each_param([&](const std::string&, Tensor& t) {
    for (float& v : t.data()) {
      v += static_cast<float>((i % 17) - 8) * 0.003f;
      ++i;
    }
  });
  c.opt.init_like(c.weights);
  for (size_t i = 0; i < c.opt.m.size(); ++i) {
    float fill = 0.01f * static_cast<float>(i + 1);
    for (float& v : c.opt.m[i].data()) v = fill;
    for (float& v : c.opt.v[i].data()) v = fill * fill;
  }
  return c;
}

bool weights_bit_equal(const mfuse::FusionNetWeights& a,
                       const mfuse::FusionNetWeights& b) {
  std::vector<const Tensor*> ta, tb;
  a.for_each_param([&](const std::string&, const Tensor& t) { ta.push_back(&t); });
  b.for_each_param([&](const std::string&, const Tensor& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) return false;
  for (size_t i = 0; i < ta.size(); ++i) {
    if (!testutil::bit_equal(*ta[i], *tb[i])) return false;
  }
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// In-place same-length substitution in the header region.
std::string patched(std::string bytes, const std::string& from,
                    const std::string& to) {
  REQUIRE(from.size() == to.size());
  const size_t pos = bytes.find(from);
  REQUIRE(pos != std::string::npos);
  bytes.replace(pos, from.size(), to);
  return bytes;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  testutil::TempDir dir("ckpt");
  const Checkpoint orig = make_checkpoint();
  const std::string path = dir.str("model.mfc");
  mfuse::save_checkpoint(path, orig);
  CHECK(!std::filesystem::exists(path + ".tmp"));

  const Checkpoint back = mfuse::load_checkpoint(path);
  CHECK(back.step == orig.step);
  CHECK(testutil::bit_equal(std::span<const float>(back.loss_history),
                            std::span<const float>(orig.loss_history)));
  CHECK(weights_bit_equal(back.weights, orig.weights));

  const mfuse::TrainConfig& a = back.config;
  const mfuse::TrainConfig& b = orig.config;
  CHECK(a.data_dir == b.data_dir);
  CHECK(a.out_dir == b.out_dir);
  CHECK(a.patch_size == b.patch_size);
  CHECK(a.num_patches == b.num_patches);
  CHECK(a.iters_per_epoch == b.iters_per_epoch);
  CHECK(a.epochs == b.epochs);
  CHECK(a.batch_size == b.batch_size);
  CHECK(a.lr0 == b.lr0);
  CHECK(a.lr_decay_rate == b.lr_decay_rate);
  CHECK(a.lr_decay_steps == b.lr_decay_steps);
  CHECK(a.weight_decay == b.weight_decay);
  CHECK(a.optimizer == b.optimizer);
  CHECK(a.checkpoint_every == b.checkpoint_every);
  CHECK(a.seed == b.seed);
  CHECK(a.model == b.model);

  REQUIRE(back.opt.initialized());
  REQUIRE(back.opt.m.size() == orig.opt.m.size());
  for (size_t i = 0; i < back.opt.m.size(); ++i) {
    CHECK(testutil::bit_equal(back.opt.m[i], orig.opt.m[i]));
    CHECK(testutil::bit_equal(back.opt.v[i], orig.opt.v[i]));
  }

  // a re-save of the loaded state produces identical bytes
  const std::string path2 = dir.str("model2.mfc");
  mfuse::save_checkpoint(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("a checkpoint without optimizer state loads as fresh") {
  testutil::TempDir dir("ckpt_noopt");
  Checkpoint c = make_checkpoint();
  c.opt = mfuse::AdamState{};
  const std::string path = dir.str("weights_only.mfc");
  mfuse::save_checkpoint(path, c);
  const Checkpoint back = mfuse::load_checkpoint(path);
  CHECK(!back.opt.initialized());
  CHECK(weights_bit_equal(back.weights, c.weights));
}

TEST_CASE("loading rejects files that are not checkpoints") {
  testutil::TempDir dir("ckpt_bad");
  CHECK_THROWS_AS(mfuse::load_checkpoint(dir.str("absent.mfc")),
                  CheckpointError);

  spit(dir.str("junk.mfc"), "PNG\r\n\x1a\nnot a checkpoint at all");
  CHECK_THROWS_AS(mfuse::load_checkpoint(dir.str("junk.mfc")),
                  CheckpointError);

  spit(dir.str("empty.mfc"), "");
  CHECK_THROWS_AS(mfuse::load_checkpoint(dir.str("empty.mfc")),
                  CheckpointError);
}

TEST_CASE("loading rejects truncated files") {
  testutil::TempDir dir("ckpt_trunc");
  const std::string path = dir.str("full.mfc");
  mfuse::save_checkpoint(path, make_checkpoint());
  const std::string bytes = slurp(path);

  for (const double frac : {0.1, 0.5, 0.9}) {
    const std::string cut = dir.str("cut.mfc");
    spit(cut, bytes.substr(0, static_cast<size_t>(bytes.size() * frac)));
    CHECK_THROWS_AS(mfuse::load_checkpoint(cut), CheckpointError);
  }

  // just the end marker missing
  const std::string noend = dir.str("noend.mfc");
  spit(noend, bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(mfuse::load_checkpoint(noend), CheckpointError);
}

TEST_CASE("loading rejects a renamed-away weight tensor") {
  testutil::TempDir dir("ckpt_missing");
  const std::string path = dir.str("m.mfc");
  mfuse::save_checkpoint(path, make_checkpoint());
  const std::string hacked = dir.str("hacked.mfc");
  spit(hacked, patched(slurp(path), "tensor stem1.w", "tensor stemX.w"));
  try {
    mfuse::load_checkpoint(hacked);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("stem1.w") != std::string::npos);
  }
}

TEST_CASE("loading rejects tensors whose shape disagrees with the header") {
  testutil::TempDir dir("ckpt_shape");
  const std::string path = dir.str("m.mfc");
  mfuse::save_checkpoint(path, make_checkpoint());
  // widen the declared model; stored tensors keep their true 8-channel shape
  const std::string hacked = dir.str("hacked.mfc");
  spit(hacked, patched(slurp(path), "channels 8", "channels 9"));
  CHECK_THROWS_AS(mfuse::load_checkpoint(hacked), CheckpointError);
}

TEST_CASE("loading rejects an invalid stored config") {
  testutil::TempDir dir("ckpt_cfg");
  const std::string path = dir.str("m.mfc");
  mfuse::save_checkpoint(path, make_checkpoint());
  const std::string hacked = dir.str("hacked.mfc");
  spit(hacked, patched(slurp(path), "patch_size 16", "patch_size -4"));
  CHECK_THROWS_AS(mfuse::load_checkpoint(hacked), CheckpointError);
}

TEST_CASE("saving into a missing directory reports a checkpoint error") {
  testutil::TempDir dir("ckpt_nodir");
  CHECK_THROWS_AS(
      mfuse::save_checkpoint(dir.str("no/such/dir/m.mfc"), make_checkpoint()),
      CheckpointError);
}
