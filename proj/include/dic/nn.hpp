// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dic/autograd.hpp"

namespace dic {

using Rng = std::mt19937_64;

/// Ordered (name, parameter) list. Order is stable and defines checkpoint layout.
template <typename T>
class ParamList {
 public:
  void add(std::string name, const Var<T>& v) { items_.emplace_back(std::move(name), v); }
  void append(const ParamList& other) {
    items_.insert(items_.end(), other.items_.begin(), other.items_.end());
  }
  [[nodiscard]] const std::vector<std::pair<std::string, Var<T>>>& items() const { return items_; }
  std::vector<std::pair<std::string, Var<T>>>& items() { return items_; }
  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] std::size_t element_count() const {
    std::size_t total = 0;
    for (const auto& [name, v] : items_) total += v.value().size();
    return total;
  }
  void zero_grad() {
    for (auto& [name, v] : items_) v.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
};

/// Kaiming fan-in normal initialisation for a rectifier with negative slope `slope`.
template <typename T>
Tensor<T> kaiming_normal(Shape shape, double fan_in, double slope, Rng& rng) {
  const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(shape);
  for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;
  ConvGeometry geom;

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, ConvGeometry g, Rng& rng, double slope = 0.0,
         bool with_bias = true)
      : geom(g) {
    const double fan_in = static_cast<double>(in_ch / g.groups) * kernel * kernel;
    weight = Var<T>(kaiming_normal<T>({out_ch, in_ch / g.groups, kernel, kernel}, fan_in, slope, rng),
                    true);
    if (with_bias) bias = Var<T>(Tensor<T>({out_ch, 1, 1, 1}), true);
  }

  Var<T> operator()(const Var<T>& x) const {
    return ag::conv2d(x, weight, bias.defined() ? &bias : nullptr, geom);
  }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.add(prefix + ".weight", weight);
    if (bias.defined()) out.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct ConvTranspose2d {
  Var<T> weight;
  Var<T> bias;
  ConvGeometry geom;

  ConvTranspose2d() = default;
  ConvTranspose2d(int in_ch, int out_ch, int kernel, ConvGeometry g, Rng& rng, double slope = 0.0)
      : geom(g) {
    // Each output pixel receives (kernel/stride)² taps from every input channel of its group.
    const double taps = static_cast<double>(kernel) * kernel / (static_cast<double>(g.stride) * g.stride);
    const double fan_in = static_cast<double>(in_ch / g.groups) * taps;
    weight = Var<T>(
        kaiming_normal<T>({in_ch, out_ch / g.groups, kernel, kernel}, fan_in, slope, rng), true);
    bias = Var<T>(Tensor<T>({out_ch, 1, 1, 1}), true);
  }

  Var<T> operator()(const Var<T>& x) const { return ag::conv_transpose2d(x, weight, &bias, geom); }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.add(prefix + ".weight", weight);
    out.add(prefix + ".bias", bias);
  }
};

/// Generator nonlinearity slope.
inline constexpr double kLeakySlope = 0.2;

template <typename T>
Var<T> lrelu(const Var<T>& x) {
  return ag::leaky_relu(x, static_cast<T>(kLeakySlope));
}

}  // namespace dic
