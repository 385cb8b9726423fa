// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over NCHW tensors.
//
// A `Var` is a handle to a graph node. Operations record a backward closure
// when any input requires a gradient; `backward(loss)` walks the recorded
// graph in reverse topological order and accumulates into `grad()`.
// Parameters are leaf Vars created with requires_grad = true and persist
// across iterations; everything else is released when the loss handle dies.

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dic/kernels.hpp"
#include "dic/tensor.hpp"

namespace dic {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Tensor<T>& value() const { return node_->value; }
  /// Direct access for optimizers and weight surgery; never call inside a live graph.
  Tensor<T>& mutable_value() { return node_->value; }
  [[nodiscard]] const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->ensure_grad(); }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }
  /// Same value, cut from the graph.
  [[nodiscard]] Var detach() const { return Var(node_->value, false); }
  [[nodiscard]] const std::shared_ptr<Node<T>>& node() const { return node_; }
  /// Scalar value of a {1,1,1,1} Var.
  [[nodiscard]] T item() const { return node_->value[0]; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool enabled();

 private:
  bool previous_;
};

/// Accumulates d(loss)/d(v) into every reachable Var that requires a gradient.
/// `loss` must hold a single element.
template <typename T>
void backward(const Var<T>& loss);

namespace ag {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias, ConvGeometry g);
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias,
                        ConvGeometry g);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
/// scale * x + shift, elementwise.
template <typename T>
Var<T> affine(const Var<T>& x, T scale, T shift);
/// Sum of any number of equally shaped Vars.
template <typename T>
Var<T> sum(std::span<const Var<T>> xs);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, T(0));
}
template <typename T>
Var<T> sigmoid(const Var<T>& x);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs);
template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count);
/// Depth-to-space: (N, C·r², H, W) -> (N, C, H·r, W·r); output(c, y·r+i, x·r+j) = input(c·r²+i·r+j, y, x).
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r);
template <typename T>
Var<T> max_pool2(const Var<T>& x);
template <typename T>
Var<T> upsample_nearest2(const Var<T>& x);
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// Softmax across channels at every pixel, computed with max subtraction.
template <typename T>
Var<T> channel_softmax(const Var<T>& x);
/// Output channel p is the sum of input channels listed in groups[p].
template <typename T>
Var<T> channel_group_sum(const Var<T>& x, const std::vector<std::vector<int>>& groups);
/// features: (N, P·C, H, W), weights: (N, P, H, W) -> Σ_p weights[p] · features[p·C .. p·C+C).
template <typename T>
Var<T> weighted_group_sum(const Var<T>& features, const Var<T>& weights);
/// Multiplies channel c by factors[c] (constant, not differentiated).
template <typename T>
Var<T> scale_channels(const Var<T>& x, const std::vector<T>& factors);

/// Mean over all elements of (a - b)².
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b);
/// Mean over all elements of |a - b|.
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mean(const Var<T>& x);
/// Mean over elements of -ln(clamp(p, eps, 1 - eps)); zero gradient where clamped.
template <typename T>
Var<T> mean_neg_log(const Var<T>& p, T eps);

}  // namespace ag
}  // namespace dic
