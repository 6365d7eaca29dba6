#include "mfuse/config_file.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mfuse/errors.hpp"

namespace mfuse {
namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

template <typename T>
T parse_num(const std::string& v, int line, const std::string& key) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  if (ss.fail() || !ss.eof()) {
    throw ConfigError("bad value for " + key + ": \"" + v + "\"", line);
  }
  return out;
}

}  // namespace

TrainConfig parse_train_config_text(const std::string& text,
                                    const std::string& origin) {
  TrainConfig cfg;
  bool have_data_dir = false;

  using Setter = std::function<void(const std::string&, int)>;
  const std::map<std::string, Setter> setters = {
      {"data_dir", [&](const std::string& v, int) {
         cfg.data_dir = v;
         have_data_dir = true;
       }},
      {"out_dir", [&](const std::string& v, int) { cfg.out_dir = v; }},
      {"patch_size", [&](const std::string& v, int l) {
         cfg.patch_size = parse_num<int>(v, l, "patch_size");
       }},
      {"num_patches", [&](const std::string& v, int l) {
         cfg.num_patches = parse_num<int64_t>(v, l, "num_patches");
       }},
      {"iters_per_epoch", [&](const std::string& v, int l) {
         cfg.iters_per_epoch = parse_num<int>(v, l, "iters_per_epoch");
       }},
      {"epochs", [&](const std::string& v, int l) {
         cfg.epochs = parse_num<int>(v, l, "epochs");
       }},
      {"batch_size", [&](const std::string& v, int l) {
         cfg.batch_size = parse_num<int>(v, l, "batch_size");
       }},
      {"lr0", [&](const std::string& v, int l) {
         cfg.lr0 = parse_num<double>(v, l, "lr0");
       }},
      {"lr_decay_rate", [&](const std::string& v, int l) {
         cfg.lr_decay_rate = parse_num<double>(v, l, "lr_decay_rate");
       }},
      {"lr_decay_steps", [&](const std::string& v, int l) {
         cfg.lr_decay_steps = parse_num<int64_t>(v, l, "lr_decay_steps");
       }},
      {"weight_decay", [&](const std::string& v, int l) {
         cfg.weight_decay = parse_num<double>(v, l, "weight_decay");
       }},
      {"optimizer", [&](const std::string& v, int) { cfg.optimizer = v; }},
      {"checkpoint_every", [&](const std::string& v, int l) {
         cfg.checkpoint_every = parse_num<int64_t>(v, l, "checkpoint_every");
       }},
      {"seed", [&](const std::string& v, int l) {
         cfg.seed = parse_num<uint64_t>(v, l, "seed");
       }},
      {"channels", [&](const std::string& v, int l) {
         cfg.model.channels = parse_num<int>(v, l, "channels");
       }},
      {"d1", [&](const std::string& v, int l) {
         cfg.model.d1 = parse_num<int>(v, l, "d1");
       }},
      {"d2", [&](const std::string& v, int l) {
         cfg.model.d2 = parse_num<int>(v, l, "d2");
       }},
      {"d3", [&](const std::string& v, int l) {
         cfg.model.d3 = parse_num<int>(v, l, "d3");
       }},
      {"lrelu_slope", [&](const std::string& v, int l) {
         cfg.model.lrelu_slope = parse_num<float>(v, l, "lrelu_slope");
       }},
      {"model_seed", [&](const std::string& v, int l) {
         cfg.model.seed = parse_num<uint64_t>(v, l, "model_seed");
       }},
  };

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected key=value, got \"" + line + "\"", line_no);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("unknown key \"" + key + "\"", line_no);
    }
    it->second(value, line_no);
  }

  if (!have_data_dir) {
    throw ConfigError(origin + ": missing required key data_dir");
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config_text(ss.str(), path);
}

}  // namespace mfuse
