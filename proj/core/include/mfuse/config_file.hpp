#pragma once

#include <string>

#include "mfuse/train_config.hpp"

namespace mfuse {

/// Parses the flat `key = value` training config dialect: one assignment per
/// line, `#` starts a comment, blank lines ignored, whitespace around key
/// and value trimmed. Unknown keys, malformed lines, bad values and a
/// missing data_dir all raise ConfigError carrying the 1-based line number
/// (0 for file-level problems).
///
/// Keys: data_dir, out_dir, patch_size, num_patches, iters_per_epoch,
/// epochs, batch_size, lr0, lr_decay_rate, lr_decay_steps, weight_decay,
/// optimizer, checkpoint_every, seed, channels, d1, d2, d3, lrelu_slope,
/// model_seed.
TrainConfig parse_train_config(const std::string& path);

/// Same grammar from an in-memory string; `origin` names the source in
/// error messages.
TrainConfig parse_train_config_text(const std::string& text,
                                    const std::string& origin);

}  // namespace mfuse
