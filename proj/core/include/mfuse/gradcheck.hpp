#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mfuse {

struct GradCheckEntry {
  std::string op;
  int instances = 0;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-3;

  bool ok() const {
    for (const GradCheckEntry& e : entries) {
      if (!(e.max_rel_err < tolerance)) return false;
    }
    return !entries.empty();
  }
};

/// Verifies every analytic gradient against central finite differences
/// (epsilon 1e-3) in 64-bit arithmetic: conv2d (input, weight and bias),
/// leaky_relu, sigmoid, add (including one tensor feeding both operands),
/// scale, mean_all, the full fusion loss, and a conv->lrelu->mean composite.
/// Each op gets `instances` random cases (>= 20 by default). The comparison
/// is |a-fd| / max(|a|,|fd|,1e-3), guarded so near-zero gradients are judged
/// absolutely at the same 1e-3 scale.
///
/// `corrupt_scale` != 1 multiplies one analytic conv2d input gradient before
/// comparison; it exists purely as a negative control for the checker.
GradCheckReport run_gradcheck(uint64_t seed, int instances = 20,
                              double corrupt_scale = 1.0);

/// Formats one line per op: "op  instances  max_rel_err  PASS|FAIL".
std::string format_gradcheck(const GradCheckReport& report);

}  // namespace mfuse
