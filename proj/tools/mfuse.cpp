#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfuse/checkpoint.hpp"
#include "mfuse/config_file.hpp"
#include "mfuse/errors.hpp"
#include "mfuse/gradcheck.hpp"
#include "mfuse/image_io.hpp"
#include "mfuse/infer.hpp"
#include "mfuse/metrics.hpp"
#include "mfuse/train.hpp"

namespace fs = std::filesystem;

namespace {

// exit codes shared with the test suite
constexpr int kOk = 0;
constexpr int kGeneric = 1;
constexpr int kInputMismatch = 2;
constexpr int kCheckpointError = 3;
constexpr int kConfigError = 4;

int run_train(const std::string& config_path, const std::string& resume_path) {
  const mfuse::TrainConfig cfg = mfuse::parse_train_config(config_path);
  mfuse::Checkpoint resume;
  const bool resuming = !resume_path.empty();
  if (resuming) resume = mfuse::load_checkpoint(resume_path);
  const auto progress = [](int64_t step, double lr, float loss) {
    std::printf("step %lld  lr %.6g  loss %.6g\n",
                static_cast<long long>(step), lr,
                static_cast<double>(loss));
  };
  const mfuse::Checkpoint final_ckpt =
      mfuse::train(cfg, resuming ? &resume : nullptr, progress);
  std::printf("trained to step %lld; checkpoint at %s\n",
              static_cast<long long>(final_ckpt.step),
              (fs::path(cfg.out_dir) / "checkpoint_latest.mfc").c_str());
  return kOk;
}

int run_fuse(const std::string& ckpt_path, const std::string& in1,
             const std::string& in2, const std::string& out,
             const std::string& color_mode) {
  const mfuse::Checkpoint ckpt = mfuse::load_checkpoint(ckpt_path);
  const mfuse::LoadedImage img1 = mfuse::load_image(in1);
  const mfuse::LoadedImage img2 = mfuse::load_image(in2);
  const mfuse::GrayImage fused =
      mfuse::fuse_pair(ckpt.weights, img1.to_gray(), img2.to_gray());
  if (color_mode == "color") {
    if (!img1.is_color || !img2.is_color) {
      throw mfuse::InputMismatchError(
          "--color color requires two color inputs");
    }
    mfuse::save_image(out, mfuse::fuse_color(img1.rgb, img2.rgb, fused));
  } else {
    mfuse::save_image(out, fused);
  }
  std::printf("fused %dx%d pair -> %s\n", fused.width, fused.height,
              out.c_str());
  return kOk;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& report_path) {
  const mfuse::Checkpoint ckpt = mfuse::load_checkpoint(ckpt_path);
  const std::vector<mfuse::ImagePair> pairs = mfuse::load_dataset(data_dir);
  std::vector<std::string> names;
  std::vector<mfuse::MetricReport> reports;
  for (const mfuse::ImagePair& p : pairs) {
    const mfuse::GrayImage fused = mfuse::fuse_pair(ckpt.weights, p.a, p.b);
    names.push_back(p.name);
    reports.push_back(mfuse::evaluate(p.a, p.b, fused));
  }
  const std::string table = mfuse::report_table(names, reports, true);
  std::ofstream out(report_path);
  if (!out) {
    throw std::runtime_error(report_path + ": cannot open for writing");
  }
  out << table;
  std::printf("evaluated %zu pairs -> %s\n", pairs.size(),
              report_path.c_str());
  return kOk;
}

int run_synth(const std::string& src_dir, const std::string& out_dir,
              double sigma, uint64_t seed) {
  if (!fs::is_directory(src_dir)) {
    throw mfuse::InputMismatchError(src_dir + ": not a directory");
  }
  std::vector<std::string> files;
  for (const fs::directory_entry& e : fs::directory_iterator(src_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".pgm" || ext == ".ppm") {
      files.push_back(e.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(out_dir);
  int written = 0;
  for (size_t i = 0; i < files.size(); ++i) {
    mfuse::GrayImage sharp;
    try {
      sharp = mfuse::load_gray(files[i]);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: skipping %s: %s\n", files[i].c_str(),
                   e.what());
      continue;
    }
    // one independent mask per source image, reproducible in isolation
    std::seed_seq seq{static_cast<uint32_t>(seed),
                      static_cast<uint32_t>(seed >> 32),
                      static_cast<uint32_t>(i)};
    std::mt19937 rng(seq);
    const bool vertical = rng() % 2 == 0;
    const int extent = vertical ? sharp.width : sharp.height;
    const int offset = std::uniform_int_distribution<int>(
        extent / 4, 3 * extent / 4)(rng);
    const mfuse::BinaryMask mask =
        mfuse::half_plane_mask(sharp.width, sharp.height, vertical, offset);
    const mfuse::SynthPair pair = mfuse::synth_pair(sharp, mask, sigma);
    const std::string stem = fs::path(files[i]).stem().string();
    mfuse::save_image((fs::path(out_dir) / (stem + "_1.png")).string(),
                      pair.p1);
    mfuse::save_image((fs::path(out_dir) / (stem + "_2.png")).string(),
                      pair.p2);
    ++written;
  }
  if (written == 0) {
    throw std::runtime_error(src_dir + ": no readable source images");
  }
  std::printf("wrote %d synthetic pairs to %s\n", written, out_dir.c_str());
  return kOk;
}

int run_gradcheck(uint64_t seed, double corrupt_scale) {
  const mfuse::GradCheckReport report =
      mfuse::run_gradcheck(seed, 20, corrupt_scale);
  std::fputs(mfuse::format_gradcheck(report).c_str(), stdout);
  return report.ok() ? kOk : kGeneric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised multi-focus image fusion"};
  app.require_subcommand(1);

  std::string config_path, resume_path;
  CLI::App* train = app.add_subcommand("train", "train from a config file");
  train->add_option("--config", config_path, "key=value training config")
      ->required();
  train->add_option("--resume", resume_path,
                    "checkpoint to continue training from");

  std::string ckpt_path, in1, in2, out_path, color_mode = "luma";
  CLI::App* fuse = app.add_subcommand("fuse", "fuse one registered pair");
  fuse->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  fuse->add_option("--in1", in1, "first source image")->required();
  fuse->add_option("--in2", in2, "second source image")->required();
  fuse->add_option("--out", out_path, "output image path")->required();
  fuse->add_option("--color", color_mode, "luma or color output")
      ->check(CLI::IsMember({"luma", "color"}));

  std::string eval_ckpt, eval_data, eval_report;
  CLI::App* eval = app.add_subcommand("eval", "fuse and score a dataset");
  eval->add_option("--ckpt", eval_ckpt, "trained checkpoint")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--report", eval_report, "report output file")->required();

  std::string synth_src, synth_out;
  double sigma = 2.0;
  uint64_t synth_seed = 1;
  CLI::App* synth =
      app.add_subcommand("synth", "make defocus pairs from sharp images");
  synth->add_option("--src", synth_src, "directory of sharp images")
      ->required();
  synth->add_option("--out", synth_out, "output dataset directory")
      ->required();
  synth->add_option("--sigma", sigma, "blur strength")->required();
  synth->add_option("--seed", synth_seed, "mask randomness seed")->required();

  uint64_t gc_seed = 1;
  double corrupt_scale = 1.0;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "verify gradients by finite differences");
  gradcheck->add_option("--seed", gc_seed, "random case seed");
  gradcheck
      ->add_option("--corrupt", corrupt_scale,
                   "scale one analytic gradient (negative control)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kGeneric;
  }

  try {
    if (*train) return run_train(config_path, resume_path);
    if (*fuse) return run_fuse(ckpt_path, in1, in2, out_path, color_mode);
    if (*eval) return run_eval(eval_ckpt, eval_data, eval_report);
    if (*synth) return run_synth(synth_src, synth_out, sigma, synth_seed);
    if (*gradcheck) return run_gradcheck(gc_seed, corrupt_scale);
  } catch (const mfuse::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const mfuse::CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kCheckpointError;
  } catch (const mfuse::InputMismatchError& e) {
    std::fprintf(stderr, "input mismatch: %s\n", e.what());
    return kInputMismatch;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kGeneric;
  }
  return kGeneric;
}
