// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/fusion.hpp"

#include <sstream>
#include <stdexcept>

#include "dic/dataset.hpp"

namespace dic {
namespace {

std::vector<int> range(int first, int last) {
  std::vector<int> v;
  for (int k = first; k <= last; ++k) v.push_back(k);
  return v;
}

std::vector<int> join(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

const std::vector<std::vector<int>>& component_groups() {
  static const std::vector<std::vector<int>> groups{
      join(range(17, 21), range(36, 41)),  // left eye + brow
      join(range(22, 26), range(42, 47)),  // right eye + brow
      range(27, 35),                       // nose
      range(48, 67),                       // mouth
      range(0, 16),                        // jawline
  };
  return groups;
}

const std::array<std::string, kNumComponents>& component_names() {
  static const std::array<std::string, kNumComponents> names{"left_eye", "right_eye", "nose",
                                                             "mouth", "jawline"};
  return names;
}

std::optional<int> component_index(const std::string& name) {
  const auto& names = component_names();
  for (int p = 0; p < kNumComponents; ++p)
    if (names[p] == name) return p;
  return std::nullopt;
}

ComponentSet parse_component_set(const std::string& spec) {
  if (spec == "all") return ComponentSet().set();
  if (spec == "none" || spec.empty()) return {};
  ComponentSet set;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto idx = component_index(item);
    if (!idx) throw std::invalid_argument("unknown facial component '" + item + "'");
    set.set(static_cast<std::size_t>(*idx));
  }
  return set;
}

std::string component_set_name(const ComponentSet& set) {
  if (set.all()) return "all";
  if (set.none()) return "none";
  std::string out;
  for (int p = 0; p < kNumComponents; ++p) {
    if (!set.test(static_cast<std::size_t>(p))) continue;
    if (!out.empty()) out += "+";
    out += component_names()[p];
  }
  return out;
}

nlohmann::json component_groups_json() {
  nlohmann::json comps = nlohmann::json::array();
  for (int p = 0; p < kNumComponents; ++p) {
    comps.push_back({{"name", component_names()[p]}, {"landmarks", component_groups()[p]}});
  }
  return {{"num_landmarks", kNumLandmarks}, {"components", comps}};
}

template <typename T>
Var<T> group_components(const Var<T>& heatmaps) {
  if (heatmaps.shape().c != kNumLandmarks) {
    throw ShapeError("group_components: expected 68 landmark channels, got " + heatmaps.shape().str());
  }
  return ag::channel_group_sum(heatmaps, component_groups());
}

template <typename T>
Var<T> attention_softmax(const Var<T>& components) {
  return ag::channel_softmax(components);
}

template <typename T>
Var<T> mask_components(const Var<T>& attention, const ComponentSet& keep) {
  if (attention.shape().c != kNumComponents) throw ShapeError("mask_components: expected 5 channels");
  if (keep.all()) return attention;
  std::vector<T> factors(kNumComponents);
  for (int p = 0; p < kNumComponents; ++p) factors[p] = keep.test(static_cast<std::size_t>(p)) ? T(1) : T(0);
  return ag::scale_channels(attention, factors);
}

template <typename T>
AttentiveFusion<T>::AttentiveFusion(int channels, int depth, Rng& rng) : channels_(channels) {
  expand_ = Conv2d<T>(channels, kNumComponents * channels, 3, {1, 1, 1}, rng, kLeakySlope);
  for (int d = 0; d < depth; ++d) {
    group_convs_.emplace_back(kNumComponents * channels, kNumComponents * channels, 3,
                              ConvGeometry{1, 1, kNumComponents}, rng, kLeakySlope);
  }
}

template <typename T>
Var<T> AttentiveFusion<T>::group_features(const Var<T>& feature) const {
  if (feature.shape().c != channels_) {
    throw ShapeError("attentive fusion: expected " + std::to_string(channels_) +
                     " feature channels, got " + feature.shape().str());
  }
  Var<T> f = lrelu(expand_(feature));
  for (std::size_t d = 0; d < group_convs_.size(); ++d) {
    f = group_convs_[d](f);
    if (d + 1 < group_convs_.size()) f = lrelu(f);
  }
  return f;
}

template <typename T>
Var<T> AttentiveFusion<T>::operator()(const Var<T>& feature, const Var<T>& heatmaps,
                                      const std::optional<ComponentSet>& keep) const {
  const Shape& fs = feature.shape();
  const Shape& hs = heatmaps.shape();
  if (hs.n != fs.n || hs.h != fs.h || hs.w != fs.w) {
    throw ShapeError("attentive fusion: heatmaps " + hs.str() + " do not match feature " + fs.str());
  }
  Var<T> attention = attention_softmax(group_components(heatmaps));
  if (keep) attention = mask_components(attention, *keep);
  return fuse_groups(group_features(feature), attention);
}

template <typename T>
void AttentiveFusion<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  expand_.collect(prefix + ".expand", out);
  for (std::size_t d = 0; d < group_convs_.size(); ++d) {
    group_convs_[d].collect(prefix + ".group" + std::to_string(d), out);
  }
}

template Var<float> group_components<float>(const Var<float>&);
template Var<double> group_components<double>(const Var<double>&);
template Var<float> attention_softmax<float>(const Var<float>&);
template Var<double> attention_softmax<double>(const Var<double>&);
template Var<float> mask_components<float>(const Var<float>&, const ComponentSet&);
template Var<double> mask_components<double>(const Var<double>&, const ComponentSet&);
template class AttentiveFusion<float>;
template class AttentiveFusion<double>;

}  // namespace dic
