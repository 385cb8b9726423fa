// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Attentive fusion of landmark heatmaps into SR features.
//
// The 68 landmark channels are summed into five facial-component maps, a
// per-pixel softmax across the components gives attention weights, and a
// stack of grouped convolutions produces one feature group per component.
// The fused feature is the attention-weighted sum of the groups.

#pragma once

#include <array>
#include <bitset>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dic/nn.hpp"

namespace dic {

inline constexpr int kNumComponents = 5;

/// Component order used by every tensor with a component axis.
enum class Component { LeftEye = 0, RightEye = 1, Nose = 2, Mouth = 3, Jawline = 4 };

using ComponentSet = std::bitset<kNumComponents>;

/// Landmark indices per component. Brows are merged into the adjacent eye.
const std::vector<std::vector<int>>& component_groups();
const std::array<std::string, kNumComponents>& component_names();
/// Accepts a component name ("mouth", "left_eye", ...).
std::optional<int> component_index(const std::string& name);
/// Parses "all", "none", or a comma-separated list of component names.
ComponentSet parse_component_set(const std::string& spec);
std::string component_set_name(const ComponentSet& set);

/// {"components": [{"name", "landmarks": [...]}, ...], "num_landmarks": 68}
nlohmann::json component_groups_json();

/// (N, 68, H, W) -> (N, 5, H, W).
template <typename T>
Var<T> group_components(const Var<T>& heatmaps);

/// Softmax over the component axis; throws std::domain_error on NaN input.
template <typename T>
Var<T> attention_softmax(const Var<T>& components);

/// Zeroes the attention of components outside `keep`, without renormalising.
template <typename T>
Var<T> mask_components(const Var<T>& attention, const ComponentSet& keep);

template <typename T>
class AttentiveFusion {
 public:
  AttentiveFusion() = default;
  /// `channels` per component group, `depth` grouped 3×3 convolutions.
  AttentiveFusion(int channels, int depth, Rng& rng);

  /// feature: (N, C, H, W), heatmaps: (N, 68, H, W).
  Var<T> operator()(const Var<T>& feature, const Var<T>& heatmaps,
                    const std::optional<ComponentSet>& keep = std::nullopt) const;

  /// Component features f_p stacked on the channel axis: (N, 5·C, H, W).
  Var<T> group_features(const Var<T>& feature) const;

  void collect(const std::string& prefix, ParamList<T>& out) const;

  [[nodiscard]] int channels() const { return channels_; }
  Conv2d<T>& expand() { return expand_; }
  std::vector<Conv2d<T>>& group_convs() { return group_convs_; }

 private:
  int channels_ = 0;
  Conv2d<T> expand_;
  std::vector<Conv2d<T>> group_convs_;
};

/// Σ_p attention[p] · group_features[p]; the attention is broadcast over each group's channels.
template <typename T>
Var<T> fuse_groups(const Var<T>& group_features, const Var<T>& attention) {
  return ag::weighted_group_sum(group_features, attention);
}

}  // namespace dic
