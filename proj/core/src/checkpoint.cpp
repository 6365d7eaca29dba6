#include "mfuse/checkpoint.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint raw floats are little-endian");

namespace mfuse {
namespace {

constexpr const char* kMagic = "mfuse-checkpoint v1";

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_float(float v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_floats(std::ostream& out, std::span<const float> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

class HeaderReader {
 public:
  HeaderReader(std::istream& in, const std::string& path)
      : in_(in), path_(path) {}

  /// Reads one `key value` line, enforcing the expected key.
  std::string value(const std::string& key) {
    std::string line;
    if (!std::getline(in_, line)) {
      throw CheckpointError(path_ + ": truncated header, expected " + key);
    }
    const size_t sp = line.find(' ');
    if (sp == std::string::npos || line.substr(0, sp) != key) {
      throw CheckpointError(path_ + ": expected \"" + key + "\", got \"" +
                            line + "\"");
    }
    return line.substr(sp + 1);
  }

  int64_t integer(const std::string& key) {
    const std::string v = value(key);
    try {
      size_t pos = 0;
      const int64_t r = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw CheckpointError(path_ + ": bad integer for " + key + ": " + v);
    }
  }

  uint64_t uinteger(const std::string& key) {
    const std::string v = value(key);
    try {
      size_t pos = 0;
      const uint64_t r = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw CheckpointError(path_ + ": bad integer for " + key + ": " + v);
    }
  }

  double real(const std::string& key) {
    const std::string v = value(key);
    try {
      size_t pos = 0;
      const double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw CheckpointError(path_ + ": bad number for " + key + ": " + v);
    }
  }

 private:
  std::istream& in_;
  const std::string& path_;
};

std::vector<float> read_floats(std::istream& in, size_t count,
                               const std::string& path) {
  std::vector<float> v(count);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != count * sizeof(float)) {
    throw CheckpointError(path + ": truncated tensor data");
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const TrainConfig& c = ckpt.config;
  if (!(c.model == ckpt.weights.config)) {
    throw CheckpointError("save_checkpoint: config/model mismatch");
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(tmp + ": cannot open for writing");
    out << kMagic << "\n";
    out << "step " << ckpt.step << "\n";
    out << "data_dir " << c.data_dir << "\n";
    out << "out_dir " << c.out_dir << "\n";
    out << "patch_size " << c.patch_size << "\n";
    out << "num_patches " << c.num_patches << "\n";
    out << "iters_per_epoch " << c.iters_per_epoch << "\n";
    out << "epochs " << c.epochs << "\n";
    out << "batch_size " << c.batch_size << "\n";
    out << "lr0 " << fmt_double(c.lr0) << "\n";
    out << "lr_decay_rate " << fmt_double(c.lr_decay_rate) << "\n";
    out << "lr_decay_steps " << c.lr_decay_steps << "\n";
    out << "weight_decay " << fmt_double(c.weight_decay) << "\n";
    out << "optimizer " << c.optimizer << "\n";
    out << "checkpoint_every " << c.checkpoint_every << "\n";
    out << "seed " << c.seed << "\n";
    out << "channels " << c.model.channels << "\n";
    out << "d1 " << c.model.d1 << "\n";
    out << "d2 " << c.model.d2 << "\n";
    out << "d3 " << c.model.d3 << "\n";
    out << "lrelu_slope " << fmt_float(c.model.lrelu_slope) << "\n";
    out << "model_seed " << c.model.seed << "\n";

    out << "loss_history " << ckpt.loss_history.size() << "\n";
    write_floats(out, ckpt.loss_history);

    std::vector<std::pair<std::string, const Tensor*>> records;
    ckpt.weights.for_each_param([&](const std::string& name, const Tensor& t) {
      records.emplace_back(name, &t);
    });
    if (ckpt.opt.initialized()) {
      size_t idx = 0;
      ckpt.weights.for_each_param(
          [&](const std::string& name, const Tensor&) {
            records.emplace_back("opt.m." + name, &ckpt.opt.m[idx]);
            records.emplace_back("opt.v." + name, &ckpt.opt.v[idx]);
            ++idx;
          });
    }
    out << "tensors " << records.size() << "\n";
    for (const auto& [name, t] : records) {
      const TensorShape& s = t->shape();
      out << "tensor " << name << " " << s.n << " " << s.c << " " << s.h
          << " " << s.w << "\n";
      write_floats(out, t->data());
    }
    out << "end\n";
    if (!out) throw CheckpointError(tmp + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw CheckpointError("rename " + tmp + " -> " + path + ": " +
                          ec.message());
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path + ": cannot open");
  std::string magic;
  if (!std::getline(in, magic) || magic != kMagic) {
    throw CheckpointError(path + ": not a checkpoint file (bad magic)");
  }
  HeaderReader h(in, path);
  Checkpoint ckpt;
  TrainConfig& c = ckpt.config;
  ckpt.step = h.integer("step");
  c.data_dir = h.value("data_dir");
  c.out_dir = h.value("out_dir");
  c.patch_size = static_cast<int>(h.integer("patch_size"));
  c.num_patches = h.integer("num_patches");
  c.iters_per_epoch = static_cast<int>(h.integer("iters_per_epoch"));
  c.epochs = static_cast<int>(h.integer("epochs"));
  c.batch_size = static_cast<int>(h.integer("batch_size"));
  c.lr0 = h.real("lr0");
  c.lr_decay_rate = h.real("lr_decay_rate");
  c.lr_decay_steps = h.integer("lr_decay_steps");
  c.weight_decay = h.real("weight_decay");
  c.optimizer = h.value("optimizer");
  c.checkpoint_every = h.integer("checkpoint_every");
  c.seed = h.uinteger("seed");
  c.model.channels = static_cast<int>(h.integer("channels"));
  c.model.d1 = static_cast<int>(h.integer("d1"));
  c.model.d2 = static_cast<int>(h.integer("d2"));
  c.model.d3 = static_cast<int>(h.integer("d3"));
  c.model.lrelu_slope = static_cast<float>(h.real("lrelu_slope"));
  c.model.seed = h.uinteger("model_seed");
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(path + ": invalid stored config: " + e.what());
  }

  const int64_t hist = h.integer("loss_history");
  if (hist < 0) throw CheckpointError(path + ": negative loss_history count");
  ckpt.loss_history = read_floats(in, static_cast<size_t>(hist), path);

  const int64_t n_tensors = h.integer("tensors");
  std::map<std::string, Tensor> by_name;
  for (int64_t i = 0; i < n_tensors; ++i) {
    std::string line;
    if (!std::getline(in, line)) {
      throw CheckpointError(path + ": truncated at tensor " +
                            std::to_string(i));
    }
    std::istringstream ls(line);
    std::string tag, name;
    TensorShape s;
    if (!(ls >> tag >> name >> s.n >> s.c >> s.h >> s.w) || tag != "tensor") {
      throw CheckpointError(path + ": bad tensor record \"" + line + "\"");
    }
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw CheckpointError(path + ": negative tensor dims in \"" + line +
                            "\"");
    }
    Tensor t = Tensor::from_data(
        s, read_floats(in, static_cast<size_t>(s.numel()), path));
    if (!by_name.emplace(name, t).second) {
      throw CheckpointError(path + ": duplicate tensor " + name);
    }
  }
  std::string line;
  if (!std::getline(in, line) || line != "end") {
    throw CheckpointError(path + ": missing end marker");
  }

  auto take = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError(path + ": missing tensor " + name);
    }
    Tensor t = it->second;
    by_name.erase(it);
    return t;
  };

  // rebuild weights on the stored topology, then overwrite every tensor
  ckpt.weights = fusion_net_init<float>(c.model);
  ckpt.weights.for_each_param([&](const std::string& name, Tensor& t) {
    Tensor loaded = take(name);
    if (!(loaded.shape() == t.shape())) {
      throw CheckpointError(path + ": tensor " + name + " has shape " +
                            loaded.shape().str() + ", expected " +
                            t.shape().str());
    }
    t = loaded;
  });

  if (!by_name.empty()) {
    const bool looks_like_opt = by_name.begin()->first.rfind("opt.", 0) == 0;
    if (!looks_like_opt) {
      throw CheckpointError(path + ": unexpected tensor " +
                            by_name.begin()->first);
    }
    ckpt.weights.for_each_param([&](const std::string& name, Tensor& t) {
      Tensor m = take("opt.m." + name);
      Tensor v = take("opt.v." + name);
      if (!(m.shape() == t.shape()) || !(v.shape() == t.shape())) {
        throw CheckpointError(path + ": optimizer moment shape mismatch for " +
                              name);
      }
      ckpt.opt.m.push_back(m);
      ckpt.opt.v.push_back(v);
    });
    if (!by_name.empty()) {
      throw CheckpointError(path + ": unexpected tensor " +
                            by_name.begin()->first);
    }
  }
  return ckpt;
}

}  // namespace mfuse
