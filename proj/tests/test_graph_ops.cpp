#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mfuse/graph.hpp"
#include "mfuse/tensor.hpp"
#include "naive_ref.hpp"
#include "test_support.hpp"

using mfuse::ConvParams;
using mfuse::Graph;
using mfuse::Tensor;
using mfuse::TensorShape;

namespace {

ConvParams ones_kernel() {
  ConvParams p;
  p.weight = Tensor::full({1, 1, 3, 3}, 1.0f);
  p.bias = Tensor::zeros({1, 1, 1, 1});
  return p;
}

}  // namespace

TEST_CASE("conv2d zero padding arithmetic on an all-ones image") {
  Graph g(false);
  const Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
  const Tensor y = g.conv2d(x, ones_kernel());
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(9.0f));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0f));
  CHECK(y.at(0, 0, 0, 2) == doctest::Approx(4.0f));
  CHECK(y.at(0, 0, 2, 0) == doctest::Approx(4.0f));
  CHECK(y.at(0, 0, 2, 2) == doctest::Approx(4.0f));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(6.0f));
  CHECK(y.at(0, 0, 1, 0) == doctest::Approx(6.0f));
}

TEST_CASE("conv2d identity kernel reproduces the input") {
  std::mt19937 rng(7);
  ConvParams p;
  p.weight = Tensor::zeros({1, 1, 3, 3});
  p.weight.at(0, 0, 1, 1) = 1.0f;
  p.bias = Tensor::zeros({1, 1, 1, 1});
  const Tensor x = testutil::rand_tensor<float>(rng, {1, 1, 5, 6}, -1, 1);
  Graph g(false);
  const Tensor y = g.conv2d(x, p);
  for (int64_t i = 0; i < x.shape().numel(); ++i) {
    CHECK(y.data()[i] == x.data()[i]);
  }
}

TEST_CASE("conv2d matches the direct triple-loop reference") {
  std::mt19937 rng(11);
  for (int i = 0; i < 10; ++i) {
    const TensorShape s{1 + i % 2, 1 + i % 3, 4 + i % 5, 4 + (i * 3) % 5};
    const Tensor x = testutil::rand_tensor<float>(rng, s, -1, 1);
    const ConvParams p = testutil::rand_conv<float>(rng, s.c, 1 + i % 4);
    Graph g(false);
    const Tensor fast = g.conv2d(x, p);
    const Tensor ref = naive::conv2d(x, p);
    REQUIRE(fast.shape() == ref.shape());
    for (int64_t j = 0; j < fast.shape().numel(); ++j) {
      CHECK(fast.data()[j] == doctest::Approx(ref.data()[j]).epsilon(1e-6));
    }
  }
}

TEST_CASE("conv2d is linear in its input when bias is zero") {
  std::mt19937 rng(13);
  const TensorShape s{1, 2, 6, 6};
  ConvParams p = testutil::rand_conv<float>(rng, 2, 3);
  p.bias = Tensor::zeros({1, 3, 1, 1});
  const Tensor x = testutil::rand_tensor<float>(rng, s, -1, 1);
  const Tensor y = testutil::rand_tensor<float>(rng, s, -1, 1);
  const float a = 1.7f, b = -0.6f;

  Tensor combo = Tensor::zeros(s);
  for (int64_t i = 0; i < s.numel(); ++i) {
    combo.data()[i] = a * x.data()[i] + b * y.data()[i];
  }
  Graph g(false);
  const Tensor lhs = g.conv2d(combo, p);
  const Tensor cx = g.conv2d(x, p);
  const Tensor cy = g.conv2d(y, p);
  for (int64_t i = 0; i < lhs.shape().numel(); ++i) {
    CHECK(lhs.data()[i] ==
          doctest::Approx(a * cx.data()[i] + b * cy.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("conv2d rejects channel mismatch and non-finite input") {
  std::mt19937 rng(17);
  Graph g(false);
  const ConvParams p = testutil::rand_conv<float>(rng, 2, 1);
  const Tensor wrong = Tensor::zeros({1, 3, 4, 4});
  CHECK_THROWS_AS(g.conv2d(wrong, p), std::invalid_argument);

  Tensor bad = Tensor::zeros({1, 2, 4, 4});
  bad.data()[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(g.conv2d(bad, p), std::invalid_argument);
}

TEST_CASE("leaky_relu slope semantics") {
  Graph g(false);
  const Tensor x = Tensor::from_data({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f});
  const Tensor y = g.leaky_relu(x, 0.2f);
  CHECK(y.data()[0] == doctest::Approx(-0.2f));
  CHECK(y.data()[1] == 0.0f);
  CHECK(y.data()[2] == 2.0f);

  std::mt19937 rng(19);
  const Tensor pos = testutil::rand_tensor<float>(rng, {1, 2, 3, 3}, 0, 1);
  const Tensor same = g.leaky_relu(pos, 0.2f);
  for (int64_t i = 0; i < pos.shape().numel(); ++i) {
    CHECK(same.data()[i] == pos.data()[i]);
  }

  const Tensor any = testutil::rand_tensor<float>(rng, {1, 2, 4, 4}, -2, 2);
  const Tensor out = g.leaky_relu(any, 0.3f);
  for (int64_t i = 0; i < any.shape().numel(); ++i) {
    const float v = any.data()[i];
    CHECK(out.data()[i] == (v >= 0.0f ? v : 0.3f * v));
  }

  CHECK_THROWS_AS(g.leaky_relu(x, 0.0f), std::invalid_argument);
  CHECK_THROWS_AS(g.leaky_relu(x, 1.0f), std::invalid_argument);
}

TEST_CASE("sigmoid is exact at 0, saturates safely, stays in (0,1)") {
  Graph g(false);
  const Tensor x =
      Tensor::from_data({1, 1, 1, 4}, {0.0f, 100.0f, -100.0f, 3.0f});
  const Tensor y = g.sigmoid(x);
  CHECK(y.data()[0] == 0.5f);
  CHECK(y.data()[1] > 1.0f - 1e-6f);
  CHECK(y.data()[1] < 1.0f);
  CHECK(y.data()[2] > 0.0f);
  CHECK(y.data()[2] < 1e-6f);
  CHECK(std::isfinite(y.data()[1]));
  CHECK(std::isfinite(y.data()[2]));

  std::mt19937 rng(23);
  const Tensor r = testutil::rand_tensor<float>(rng, {2, 1, 5, 5}, -8, 8);
  const Tensor s = g.sigmoid(r);
  for (int64_t i = 0; i < r.shape().numel(); ++i) {
    const double ref = 1.0 / (1.0 + std::exp(-static_cast<double>(r.data()[i])));
    CHECK(s.data()[i] == doctest::Approx(ref).epsilon(1e-6));
    CHECK(s.data()[i] > 0.0f);
    CHECK(s.data()[i] < 1.0f);
  }
}

TEST_CASE("add, scale and mean_all basics") {
  Graph g(false);
  std::mt19937 rng(29);
  const Tensor x = testutil::rand_tensor<float>(rng, {1, 2, 3, 3}, -1, 1);
  const Tensor zero = Tensor::zeros(x.shape());

  const Tensor same = g.add(x, zero);
  for (int64_t i = 0; i < x.shape().numel(); ++i) {
    CHECK(same.data()[i] == x.data()[i]);
  }
  const Tensor nil = g.scale(x, 0.0f);
  for (float v : nil.data()) CHECK(v == 0.0f);

  const Tensor m =
      g.mean_all(Tensor::from_data({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}));
  CHECK(m.scalar() == doctest::Approx(2.5f));

  CHECK_THROWS_AS(g.add(x, Tensor::zeros({1, 2, 3, 4})),
                  std::invalid_argument);
}

TEST_CASE("ops preserve spatial shape") {
  std::mt19937 rng(31);
  Graph g(false);
  const TensorShape s{2, 2, 5, 9};
  const Tensor x = testutil::rand_tensor<float>(rng, s, -1, 1);
  const ConvParams p = testutil::rand_conv<float>(rng, 2, 4);
  CHECK(g.conv2d(x, p).shape() == TensorShape{2, 4, 5, 9});
  CHECK(g.leaky_relu(x, 0.2f).shape() == s);
  CHECK(g.sigmoid(x).shape() == s);
  CHECK(g.add(x, x).shape() == s);
  CHECK(g.scale(x, 2.0f).shape() == s);
  CHECK(g.mean_all(x).shape() == TensorShape{1, 1, 1, 1});
}

TEST_CASE("forward is bit-deterministic") {
  std::mt19937 rng(37);
  const Tensor x = testutil::rand_tensor<float>(rng, {1, 3, 7, 7}, -1, 1);
  const ConvParams p = testutil::rand_conv<float>(rng, 3, 2);
  Graph g(false);
  const Tensor a = g.conv2d(x, p);
  const Tensor b = g.conv2d(x, p);
  for (int64_t i = 0; i < a.shape().numel(); ++i) {
    CHECK(a.data()[i] == b.data()[i]);
  }
}

TEST_CASE("backward of mean_all spreads 1/numel") {
  Tensor x = Tensor::full({1, 2, 2, 2}, 3.0f);
  x.set_requires_grad(true);
  Graph g;
  g.backward(g.mean_all(x));
  REQUIRE(x.has_grad());
  for (float v : x.grad()) CHECK(v == doctest::Approx(1.0f / 8.0f));
}

TEST_CASE("backward of mean(sigmoid) at zero is 0.25/numel") {
  Tensor x = Tensor::zeros({1, 1, 2, 4});
  x.set_requires_grad(true);
  Graph g;
  g.backward(g.mean_all(g.sigmoid(x)));
  for (float v : x.grad()) CHECK(v == doctest::Approx(0.25f / 8.0f));
}

TEST_CASE("gradients accumulate when a tensor feeds two consumers") {
  Tensor x = Tensor::full({1, 1, 1, 2}, 1.0f);
  x.set_requires_grad(true);
  Graph g;
  // loss = mean(x + 0.5*x) -> dloss/dx = 1.5 / numel
  g.backward(g.mean_all(g.add(x, g.scale(x, 0.5f))));
  for (float v : x.grad()) CHECK(v == doctest::Approx(1.5f / 2.0f));
}

TEST_CASE("backward rejects non-scalar loss and double invocation") {
  Tensor x = Tensor::zeros({1, 1, 2, 2});
  x.set_requires_grad(true);
  Graph g;
  const Tensor y = g.sigmoid(x);
  CHECK_THROWS_AS(g.backward(y), std::invalid_argument);
  const Tensor loss = g.mean_all(y);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), std::logic_error);
}

TEST_CASE("non-recording graphs refuse backward") {
  Tensor x = Tensor::zeros({1, 1, 2, 2});
  x.set_requires_grad(true);
  Graph g(false);
  const Tensor loss = g.mean_all(x);
  CHECK_THROWS_AS(g.backward(loss), std::logic_error);
}

TEST_CASE("conv2d backward matches finite differences in double") {
  using DGraph = mfuse::GraphT<double>;
  using DTensor = mfuse::TensorT<double>;
  std::mt19937 rng(41);
  DTensor x = testutil::rand_tensor<double>(rng, {1, 2, 8, 8}, -1, 1);
  mfuse::ConvParamsT<double> p = testutil::rand_conv<double>(rng, 2, 2);
  x.set_requires_grad(true);

  auto forward = [&]() {
    DGraph g(false);
    return g.mean_all(g.leaky_relu(g.conv2d(x, p), 0.2)).scalar();
  };
  DGraph g;
  g.backward(g.mean_all(g.leaky_relu(g.conv2d(x, p), 0.2)));
  REQUIRE(x.has_grad());

  const double eps = 1e-3;
  double worst = 0.0;
  for (size_t i = 0; i < x.data().size(); ++i) {
    const double keep = x.data()[i];
    // keep the probe clear of the leaky_relu kink
    x.data()[i] = keep + eps;
    const double fp = forward();
    x.data()[i] = keep - eps;
    const double fm = forward();
    x.data()[i] = keep;
    const double fd = (fp - fm) / (2 * eps);
    const double a = x.grad()[i];
    worst = std::max(worst, std::abs(a - fd) /
                                std::max({std::abs(a), std::abs(fd), 1e-3}));
  }
  CHECK(worst < 1e-3);
}
