// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Recurrent SR branch: LR feature extractor, recursive block (concat + conv +
// landmark fusion + feedback block), HR generation layers and the global
// bicubic skip connection.

#pragma once

#include <optional>
#include <vector>

#include "dic/fusion.hpp"
#include "dic/network_config.hpp"

namespace dic {

/// Iterative up/down projection block with dense 1×1-compressed skips.
/// Maps (N, C, H, W) to (N, C, H, W); the HR projections run at 4H × 4W.
template <typename T>
class FeedbackBlock {
 public:
  FeedbackBlock() = default;
  FeedbackBlock(int channels, int groups, Rng& rng);

  Var<T> operator()(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  std::vector<ConvTranspose2d<T>> up_;
  std::vector<Conv2d<T>> down_;
  std::vector<Conv2d<T>> up_compress_;
  std::vector<Conv2d<T>> down_compress_;
  Conv2d<T> compress_out_;
};

template <typename T>
struct SrStepOutput {
  Var<T> sr;        // I_n, (N, 3, 8H, 8W)
  Var<T> feedback;  // f_n, (N, C, 2H, 2W)
};

template <typename T>
class SrBranch {
 public:
  SrBranch() = default;
  SrBranch(const NetworkConfig& config, Rng& rng);

  /// Conv to 4C channels then depth-to-space ×2: (N,3,H,W) -> (N,C,2H,2W).
  Var<T> extract_lr_features(const Var<T>& lr) const;

  /// Fusion-free initial block; its output seeds the first step's feedback.
  Var<T> init(const Var<T>& lr_features) const;

  /// One recursion. `lr_upsampled` is the bicubic ×8 upsample of the LR input.
  /// `keep` masks component attention (DIC only).
  SrStepOutput<T> step(const Var<T>& lr_features, const Var<T>& feedback,
                       const Var<T>& landmarks_prev, const Var<T>& lr_upsampled, Variant variant,
                       const std::optional<ComponentSet>& keep = std::nullopt) const;

  /// G2: transposed conv ×4 then conv to RGB.
  Var<T> generate(const Var<T>& feature) const;

  /// Parameters the given variant actually uses.
  void collect(const std::string& prefix, Variant variant, ParamList<T>& out) const;
  /// Every parameter, including those of the unused fusion paths.
  void collect_all(const std::string& prefix, ParamList<T>& out) const;

  AttentiveFusion<T>& fusion() { return fusion_; }
  Conv2d<T>& output_conv() { return g2_conv_; }
  [[nodiscard]] int channels() const { return channels_; }

 private:
  int channels_ = 0;
  Conv2d<T> g1_conv_;
  Conv2d<T> compress_in_;
  AttentiveFusion<T> fusion_;
  Conv2d<T> concat_conv_;  // DIC_CL: (C + 68) -> C, 1×1
  FeedbackBlock<T> core_;
  Conv2d<T> init_compress_;
  FeedbackBlock<T> init_core_;
  ConvTranspose2d<T> g2_deconv_;
  Conv2d<T> g2_conv_;
};

/// Bicubic ×8 upsample of a batch of LR images, as a constant graph input.
template <typename T>
Var<T> upsample_skip(const Var<T>& lr);

}  // namespace dic
