#include "mfuse/infer.hpp"

#include "mfuse/errors.hpp"
#include "mfuse/graph.hpp"

namespace mfuse {

GrayImage fuse_pair(const FusionNetWeights& w, const GrayImage& a,
                    const GrayImage& b) {
  if (!a.same_size(b)) {
    throw InputMismatchError("fuse: inputs are " + std::to_string(a.width) +
                             "x" + std::to_string(a.height) + " and " +
                             std::to_string(b.width) + "x" +
                             std::to_string(b.height));
  }
  if (a.width < 7 || a.height < 7) {
    throw std::invalid_argument("fuse: inputs must be at least 7x7");
  }
  Graph g(false);
  return from_tensor(fusion_net_forward(g, w, to_tensor(a), to_tensor(b)));
}

}  // namespace mfuse
