// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Recurrent alignment branch: stem A1, recurrent hourglass A_R with a
// feedback/head feature split, and the heatmap head A2.

#pragma once

#include <memory>
#include <vector>

#include "dic/network_config.hpp"
#include "dic/nn.hpp"

namespace dic {

/// Pre-activation bottleneck residual block without normalisation.
template <typename T>
class Residual {
 public:
  Residual() = default;
  Residual(int in_ch, int out_ch, Rng& rng);

  Var<T> operator()(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  Conv2d<T> conv1_, conv2_, conv3_;
  Conv2d<T> skip_;  // only when in_ch != out_ch
};

/// Symmetric encoder/decoder: `depth` max-pool levels down, nearest upsampling back.
template <typename T>
class Hourglass {
 public:
  Hourglass() = default;
  Hourglass(int depth, int channels, Rng& rng);

  Var<T> operator()(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
  [[nodiscard]] int depth() const { return depth_; }

 private:
  int depth_ = 0;
  Residual<T> up1_, low1_, low3_;
  Residual<T> bottom_;                 // depth == 1 only
  std::shared_ptr<Hourglass> inner_;   // depth > 1 only
};

template <typename T>
struct AlignStepOutput {
  Var<T> heatmaps;  // L_n, (N, 68, H/4, W/4)
  Var<T> feedback;  // f_n, (N, W, H/4, W/4)
};

template <typename T>
class AlignBranch {
 public:
  AlignBranch() = default;
  AlignBranch(const NetworkConfig& config, Rng& rng);

  /// A1: (N, 3, 128, 128) -> (N, W, 32, 32).
  Var<T> stem(const Var<T>& sr) const;
  /// f_0 = A1(I_1).
  Var<T> init(const Var<T>& sr1) const { return stem(sr1); }
  /// One recursion on a precomputed stem feature.
  AlignStepOutput<T> step_from_stem(const Var<T>& stem_feature, const Var<T>& feedback) const;
  AlignStepOutput<T> step(const Var<T>& sr, const Var<T>& feedback) const {
    return step_from_stem(stem(sr), feedback);
  }
  /// A_R trunk before the split: (N, 2W, 32, 32).
  Var<T> recur(const Var<T>& stem_feature, const Var<T>& feedback) const;
  /// A2: (N, W, 32, 32) -> (N, 68, 32, 32), linear output.
  Var<T> head(const Var<T>& x) const;

  void collect(const std::string& prefix, ParamList<T>& out) const;
  [[nodiscard]] int width() const { return width_; }

 private:
  int width_ = 0;
  Conv2d<T> stem_conv_;
  Residual<T> stem_res1_, stem_res2_, stem_res3_;
  Conv2d<T> ar_conv_;
  Hourglass<T> hourglass_;
  Conv2d<T> lin_;
  Conv2d<T> head1_, head2_;
};

}  // namespace dic
