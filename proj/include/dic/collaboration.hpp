// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// N-step collaboration between the SR and alignment branches.
//
// Step n fuses the landmarks estimated at step n-1 into the SR recursion;
// step 1 receives an all-zero heatmap, which gives uniform attention. The
// alignment feedback is seeded from the stem applied to the first SR image.

#pragma once

#include <optional>
#include <vector>

#include "dic/align_branch.hpp"
#include "dic/image.hpp"
#include "dic/sr_branch.hpp"

namespace dic {

template <typename T>
struct StepTrace {
  std::vector<Var<T>> sr_images;        // I_1 .. I_N
  std::vector<Var<T>> heatmaps;         // L_1 .. L_N; empty for DIC_NL
  std::vector<Var<T>> landmark_inputs;  // heatmaps consumed by each step; empty for DIC_NL
  Var<T> lr_upsampled;

  [[nodiscard]] const Var<T>& final_sr() const { return sr_images.back(); }
};

struct ForwardOptions {
  /// Attention mask applied at the final step only.
  std::optional<ComponentSet> final_step_keep;
  /// Skip the alignment pass after the last SR image (nothing consumes it at inference).
  bool skip_final_alignment = false;
};

template <typename T>
class DicNetwork {
 public:
  DicNetwork() = default;
  DicNetwork(const NetworkConfig& config, std::uint64_t seed);

  StepTrace<T> forward(const Var<T>& lr, int n_steps, Variant variant,
                       const ForwardOptions& options = {}) const;

  /// Final-step SR image of a single (1, 3, h, w) LR image, without recording a graph.
  Tensor<T> infer(const Tensor<T>& lr, int n_steps, Variant variant) const;

  /// Final SR image with component attention outside `keep` zeroed at the last step.
  Tensor<T> component_ablation_render(const Tensor<T>& lr, const ComponentSet& keep,
                                      int n_steps) const;

  /// Attention maps (N, 5, h, w) produced from a heatmap stack, optionally masked.
  static Var<T> attention(const Var<T>& heatmaps, const std::optional<ComponentSet>& keep = {});

  /// Trainable parameters of `variant`; DIC_NL excludes the alignment branch and fusion.
  [[nodiscard]] ParamList<T> parameters(Variant variant) const;
  /// Every parameter in checkpoint order.
  [[nodiscard]] ParamList<T> all_parameters() const;

  SrBranch<T>& sr_branch() { return sr_; }
  AlignBranch<T>& align_branch() { return align_; }
  [[nodiscard]] const NetworkConfig& config() const { return config_; }

 private:
  NetworkConfig config_;
  SrBranch<T> sr_;
  AlignBranch<T> align_;
};

}  // namespace dic
