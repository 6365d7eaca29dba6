#pragma once

#include "mfuse/image.hpp"
#include "mfuse/model.hpp"

namespace mfuse {

/// Fuses one registered pair at its native size (no graph recording, no
/// gradients). Throws InputMismatchError when the sizes differ and
/// std::invalid_argument when either side is smaller than 7x7.
GrayImage fuse_pair(const FusionNetWeights& w, const GrayImage& a,
                    const GrayImage& b);

}  // namespace mfuse
