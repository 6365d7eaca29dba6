#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfuse {

/// Dense 4-D shape in (batch, channels, height, width) order.
struct TensorShape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t numel() const { return n * c * h * w; }
  bool operator==(const TensorShape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

namespace detail {

template <typename T>
struct TensorStorage {
  TensorShape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the backward pass reaches this tensor
  bool requires_grad = false;
  bool on_grad_path = false;  // reaches a requires_grad leaf through recorded ops
};

}  // namespace detail

/// Shared-storage handle to a dense 4-D array with an optional gradient slot.
/// Copies are shallow; forward passes treat tensors as immutable once produced.
template <typename T>
class TensorT {
 public:
  using Scalar = T;

  TensorT() = default;

  static TensorT zeros(TensorShape s, bool requires_grad = false) {
    check_shape(s);
    TensorT t;
    t.st_ = std::make_shared<detail::TensorStorage<T>>();
    t.st_->shape = s;
    t.st_->value.assign(static_cast<size_t>(s.numel()), T(0));
    t.st_->requires_grad = requires_grad;
    return t;
  }

  static TensorT full(TensorShape s, T v, bool requires_grad = false) {
    TensorT t = zeros(s, requires_grad);
    for (T& x : t.st_->value) x = v;
    return t;
  }

  static TensorT from_data(TensorShape s, std::vector<T> data,
                           bool requires_grad = false) {
    check_shape(s);
    if (static_cast<int64_t>(data.size()) != s.numel()) {
      throw std::invalid_argument("tensor data length " +
                                  std::to_string(data.size()) +
                                  " does not match shape " + s.str());
    }
    TensorT t;
    t.st_ = std::make_shared<detail::TensorStorage<T>>();
    t.st_->shape = s;
    t.st_->value = std::move(data);
    t.st_->requires_grad = requires_grad;
    return t;
  }

  static TensorT scalar_value(T v) {
    return from_data({1, 1, 1, 1}, {v});
  }

  bool valid() const { return static_cast<bool>(st_); }
  const TensorShape& shape() const { return st_->shape; }
  int64_t numel() const { return st_->shape.numel(); }

  std::span<T> data() { return {st_->value.data(), st_->value.size()}; }
  std::span<const T> data() const {
    return {st_->value.data(), st_->value.size()};
  }

  T& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    return st_->value[static_cast<size_t>(offset(n, c, y, x))];
  }
  const T& at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return st_->value[static_cast<size_t>(offset(n, c, y, x))];
  }

  /// Value of a one-element tensor.
  T scalar() const {
    if (numel() != 1) {
      throw std::invalid_argument("scalar() on tensor of shape " +
                                  shape().str());
    }
    return st_->value[0];
  }

  bool requires_grad() const { return st_->requires_grad; }
  void set_requires_grad(bool b) {
    st_->requires_grad = b;
    if (b) st_->on_grad_path = true;
  }

  bool has_grad() const { return !st_->grad.empty(); }

  std::span<const T> grad() const {
    if (!has_grad()) {
      throw std::logic_error("tensor has no gradient (backward not run?)");
    }
    return {st_->grad.data(), st_->grad.size()};
  }

  /// Gradient buffer for accumulation, zero-initialized on first use.
  std::span<T> grad_buffer() {
    if (st_->grad.empty()) {
      st_->grad.assign(st_->value.size(), T(0));
    }
    return {st_->grad.data(), st_->grad.size()};
  }

  /// Resets accumulated gradients to zero. Called between training steps.
  void zero_grad() {
    for (T& g : st_->grad) g = T(0);
  }

  void drop_grad() { st_->grad.clear(); }

  bool same_storage(const TensorT& o) const { return st_ == o.st_; }

  bool on_grad_path() const {
    return st_->requires_grad || st_->on_grad_path;
  }
  void mark_on_grad_path() { st_->on_grad_path = true; }

  bool all_finite() const {
    for (T v : st_->value) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  static void check_shape(const TensorShape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw std::invalid_argument("negative tensor dimension in " + s.str());
    }
  }

  int64_t offset(int64_t n, int64_t c, int64_t y, int64_t x) const {
    const TensorShape& s = st_->shape;
    return ((n * s.c + c) * s.h + y) * s.w + x;
  }

  std::shared_ptr<detail::TensorStorage<T>> st_;
};

using Tensor = TensorT<float>;

/// One 3x3 convolution layer: weights (outC, inC, 3, 3) plus bias (1, outC, 1, 1).
template <typename T>
struct ConvParamsT {
  TensorT<T> weight;
  TensorT<T> bias;

  int64_t out_channels() const { return weight.shape().n; }
  int64_t in_channels() const { return weight.shape().c; }

  void validate() const {
    const TensorShape& ws = weight.shape();
    if (ws.h != 3 || ws.w != 3) {
      throw std::invalid_argument("conv kernel must be 3x3, got " + ws.str());
    }
    const TensorShape& bs = bias.shape();
    if (bs.n != 1 || bs.c != ws.n || bs.h != 1 || bs.w != 1) {
      throw std::invalid_argument("conv bias shape " + bs.str() +
                                  " does not match " +
                                  std::to_string(ws.n) + " output channels");
    }
  }
};

using ConvParams = ConvParamsT<float>;

}  // namespace mfuse
