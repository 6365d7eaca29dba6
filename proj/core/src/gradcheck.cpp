#include "mfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <span>

#include "mfuse/conv.hpp"
#include "mfuse/graph.hpp"
#include "mfuse/ssim.hpp"
#include "mfuse/tensor.hpp"

namespace mfuse {
namespace {

using DTensor = TensorT<double>;
using DGraph = GraphT<double>;
using DConv = ConvParamsT<double>;

constexpr double kEps = 1e-3;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

DTensor rand_tensor(std::mt19937& rng, const TensorShape& s, double lo,
                    double hi) {
  DTensor t = DTensor::zeros(s);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

/// Keeps every element at least `margin` away from zero so a +-eps probe
/// cannot cross the leaky_relu kink.
void avoid_kink(DTensor& t, double margin) {
  for (double& v : t.data()) {
    if (std::abs(v) < margin) v = v < 0.0 ? -margin : margin;
  }
}

/// One gradient-check case: `forward` must recompute the scalar loss from
/// the current contents of `inputs` (without recording), `grads` receives
/// the analytic gradient of each input after one recorded backward.
struct Case {
  std::vector<DTensor> inputs;
  std::function<double()> forward;
  std::function<std::vector<std::vector<double>>()> analytic;
};

double check_case(Case& c, double corrupt_scale, bool corrupt_here) {
  std::vector<std::vector<double>> grads = c.analytic();
  if (corrupt_here && !grads.empty() && !grads[0].empty()) {
    grads[0][0] *= corrupt_scale;
  }
  double worst = 0.0;
  for (size_t i = 0; i < c.inputs.size(); ++i) {
    std::span<double> data = c.inputs[i].data();
    for (size_t j = 0; j < data.size(); ++j) {
      const double keep = data[j];
      data[j] = keep + kEps;
      const double fp = c.forward();
      data[j] = keep - kEps;
      const double fm = c.forward();
      data[j] = keep;
      const double fd = (fp - fm) / (2.0 * kEps);
      worst = std::max(worst, rel_err(grads[i][j], fd));
    }
  }
  return worst;
}

std::vector<std::vector<double>> grads_of(const std::vector<DTensor>& inputs) {
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (const DTensor& t : inputs) {
    if (t.has_grad()) {
      out.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      out.emplace_back(static_cast<size_t>(t.shape().numel()), 0.0);
    }
  }
  return out;
}

void clear_grads(std::vector<DTensor>& inputs) {
  for (DTensor& t : inputs) {
    t.drop_grad();
    t.set_requires_grad(true);
  }
}

GradCheckEntry run_op(const std::string& name, int instances,
                      std::mt19937& rng,
                      const std::function<Case(std::mt19937&)>& make,
                      double corrupt_scale, bool corrupt_first) {
  GradCheckEntry e;
  e.op = name;
  e.instances = instances;
  for (int i = 0; i < instances; ++i) {
    Case c = make(rng);
    e.max_rel_err = std::max(
        e.max_rel_err,
        check_case(c, corrupt_scale, corrupt_first && i == 0));
  }
  return e;
}

TensorShape small_shape(std::mt19937& rng, int64_t max_c) {
  std::uniform_int_distribution<int64_t> nd(1, 2), cd(1, max_c), sd(4, 8);
  return {nd(rng), cd(rng), sd(rng), sd(rng)};
}

DConv rand_conv(std::mt19937& rng, int64_t in_c, int64_t out_c) {
  DConv p;
  p.weight = rand_tensor(rng, {out_c, in_c, 3, 3}, -0.5, 0.5);
  p.bias = rand_tensor(rng, {1, out_c, 1, 1}, -0.2, 0.2);
  return p;
}

}  // namespace

GradCheckReport run_gradcheck(uint64_t seed, int instances,
                              double corrupt_scale) {
  std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
  GradCheckReport report;
  const bool corrupt = corrupt_scale != 1.0;

  auto conv_case = [](std::mt19937& r) {
    const TensorShape s = small_shape(r, 3);
    std::uniform_int_distribution<int64_t> od(1, 3);
    DConv p = rand_conv(r, s.c, od(r));
    Case c;
    c.inputs = {rand_tensor(r, s, -1.0, 1.0), p.weight, p.bias};
    DTensor x = c.inputs[0];
    c.forward = [x, p]() {
      DGraph g(false);
      return g.mean_all(g.sigmoid(g.conv2d(x, p))).scalar();
    };
    c.analytic = [c]() mutable {
      clear_grads(c.inputs);
      DGraph g;
      DConv p{c.inputs[1], c.inputs[2]};
      g.backward(g.mean_all(g.sigmoid(g.conv2d(c.inputs[0], p))));
      return grads_of(c.inputs);
    };
    return c;
  };
  report.entries.push_back(
      run_op("conv2d", instances, rng, conv_case, corrupt_scale, corrupt));

  auto lrelu_case = [](std::mt19937& r) {
    DTensor x = rand_tensor(r, small_shape(r, 2), -1.0, 1.0);
    avoid_kink(x, 5.0 * kEps);
    std::uniform_real_distribution<double> sd(0.05, 0.5);
    const double slope = sd(r);
    Case c;
    c.inputs = {x};
    c.forward = [x, slope]() {
      DGraph g(false);
      return g.mean_all(g.sigmoid(g.leaky_relu(x, slope))).scalar();
    };
    c.analytic = [c, slope]() mutable {
      clear_grads(c.inputs);
      DGraph g;
      g.backward(g.mean_all(g.sigmoid(g.leaky_relu(c.inputs[0], slope))));
      return grads_of(c.inputs);
    };
    return c;
  };
  report.entries.push_back(
      run_op("leaky_relu", instances, rng, lrelu_case, 1.0, false));

  auto sigmoid_case = [](std::mt19937& r) {
    DTensor x = rand_tensor(r, small_shape(r, 2), -3.0, 3.0);
    Case c;
    c.inputs = {x};
    c.forward = [x]() {
      DGraph g(false);
      return g.mean_all(g.scale(g.sigmoid(x), 1.7)).scalar();
    };
    c.analytic = [c]() mutable {
      clear_grads(c.inputs);
      DGraph g;
      g.backward(g.mean_all(g.scale(g.sigmoid(c.inputs[0]), 1.7)));
      return grads_of(c.inputs);
    };
    return c;
  };
  report.entries.push_back(
      run_op("sigmoid", instances, rng, sigmoid_case, 1.0, false));

  auto add_case = [](std::mt19937& r) {
    const TensorShape s = small_shape(r, 2);
    // every other instance feeds one tensor into both operands, which
    // exercises gradient accumulation
    const bool reuse = (s.h + s.w) % 2 == 0;
    Case c;
    if (reuse) {
      c.inputs = {rand_tensor(r, s, -1.0, 1.0)};
    } else {
      c.inputs = {rand_tensor(r, s, -1.0, 1.0), rand_tensor(r, s, -1.0, 1.0)};
    }
    c.forward = [c, reuse]() {
      DGraph g(false);
      const DTensor& a = c.inputs[0];
      const DTensor& b = reuse ? c.inputs[0] : c.inputs[1];
      return g.mean_all(g.sigmoid(g.add(a, b))).scalar();
    };
    c.analytic = [c, reuse]() mutable {
      clear_grads(c.inputs);
      DGraph g;
      const DTensor& a = c.inputs[0];
      const DTensor& b = reuse ? c.inputs[0] : c.inputs[1];
      g.backward(g.mean_all(g.sigmoid(g.add(a, b))));
      return grads_of(c.inputs);
    };
    return c;
  };
  report.entries.push_back(
      run_op("add", instances, rng, add_case, 1.0, false));

  auto scale_case = [](std::mt19937& r) {
    DTensor x = rand_tensor(r, small_shape(r, 2), -1.0, 1.0);
    std::uniform_real_distribution<double> kd(0.5, 2.0);
    const double k = kd(r);
    Case c;
    c.inputs = {x};
    c.forward = [x, k]() {
      DGraph g(false);
      return g.mean_all(g.sigmoid(g.scale(x, k))).scalar();
    };
    c.analytic = [c, k]() mutable {
      clear_grads(c.inputs);
      DGraph g;
      g.backward(g.mean_all(g.sigmoid(g.scale(c.inputs[0], k))));
      return grads_of(c.inputs);
    };
    return c;
  };
  report.entries.push_back(
      run_op("scale", instances, rng, scale_case, 1.0, false));

  auto mean_case = [](std::mt19937& r) {
    DTensor x = rand_tensor(r, small_shape(r, 2), -1.0, 1.0);
    Case c;
    c.inputs = {x};
    c.forward = [x]() {
      DGraph g(false);
      return g.mean_all(x).scalar();
    };
    c.analytic = [c]() mutable {
      clear_grads(c.inputs);
      DGraph g;
      g.backward(g.mean_all(c.inputs[0]));
      return grads_of(c.inputs);
    };
    return c;
  };
  report.entries.push_back(
      run_op("mean_all", instances, rng, mean_case, 1.0, false));

  auto loss_case = [](std::mt19937& r) {
    std::uniform_int_distribution<int64_t> nd(1, 2), sd(9, 12);
    const TensorShape s{nd(r), 1, sd(r), sd(r)};
    const DTensor x1 = rand_tensor(r, s, 0.0, 1.0);
    const DTensor x2 = rand_tensor(r, s, 0.0, 1.0);
    Case c;
    c.inputs = {rand_tensor(r, s, 0.05, 0.95)};
    DTensor y = c.inputs[0];
    c.forward = [x1, x2, y]() {
      DGraph g(false);
      return fusion_loss(g, x1, x2, y).scalar();
    };
    c.analytic = [c, x1, x2]() mutable {
      clear_grads(c.inputs);
      DGraph g;
      g.backward(fusion_loss(g, x1, x2, c.inputs[0]));
      return grads_of(c.inputs);
    };
    return c;
  };
  report.entries.push_back(
      run_op("fusion_loss", instances, rng, loss_case, 1.0, false));

  auto composite_case = [](std::mt19937& r) {
    // resample until no conv output sits near the leaky_relu kink, where a
    // +-eps probe of any input (or bias, which shifts a whole channel by
    // eps) would cross it and invalidate the finite difference
    const TensorShape s = small_shape(r, 2);
    DConv p;
    DTensor x;
    for (int tries = 0; tries < 200; ++tries) {
      p = rand_conv(r, s.c, 2);
      x = rand_tensor(r, s, -1.0, 1.0);
      DTensor out = DTensor::zeros({s.n, 2, s.h, s.w});
      conv2d_forward(s, x.data().data(), 2, p.weight.data().data(),
                     p.bias.data().data(), out.data().data());
      double nearest = 1.0;
      for (double v : out.data()) nearest = std::min(nearest, std::abs(v));
      if (nearest > 2.0 * kEps) break;
    }
    Case c;
    c.inputs = {x, p.weight, p.bias};
    c.forward = [x, p]() {
      DGraph g(false);
      return g.mean_all(g.leaky_relu(g.conv2d(x, p), 0.2)).scalar();
    };
    c.analytic = [c]() mutable {
      clear_grads(c.inputs);
      DGraph g;
      DConv p{c.inputs[1], c.inputs[2]};
      g.backward(g.mean_all(g.leaky_relu(g.conv2d(c.inputs[0], p), 0.2)));
      return grads_of(c.inputs);
    };
    return c;
  };
  report.entries.push_back(run_op("conv_lrelu_mean", instances, rng,
                                  composite_case, 1.0, false));

  return report;
}

std::string format_gradcheck(const GradCheckReport& report) {
  std::string out;
  char line[128];
  for (const GradCheckEntry& e : report.entries) {
    std::snprintf(line, sizeof(line), "%-16s %4d instances  max_rel_err %.3e  %s\n",
                  e.op.c_str(), e.instances, e.max_rel_err,
                  e.max_rel_err < report.tolerance ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace mfuse
