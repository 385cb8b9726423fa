// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/collaboration.hpp"

#include <stdexcept>

#include "dic/dataset.hpp"

namespace dic {

template <typename T>
DicNetwork<T>::DicNetwork(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng rng(seed);
  sr_ = SrBranch<T>(config, rng);
  align_ = AlignBranch<T>(config, rng);
}

template <typename T>
StepTrace<T> DicNetwork<T>::forward(const Var<T>& lr, int n_steps, Variant variant,
                                    const ForwardOptions& options) const {
  if (n_steps < 1) throw std::invalid_argument("forward: n_steps must be >= 1");
  StepTrace<T> trace;
  trace.lr_upsampled = upsample_skip(lr);
  const Var<T> lr_feat = sr_.extract_lr_features(lr);
  Var<T> sr_feedback = sr_.init(lr_feat);

  const bool with_landmarks = uses_landmarks(variant);
  Var<T> landmarks;
  if (with_landmarks) {
    const Shape& fs = lr_feat.shape();
    landmarks = Var<T>(Tensor<T>({fs.n, kNumLandmarks, fs.h, fs.w}), false);
  }
  Var<T> align_feedback;
  for (int n = 0; n < n_steps; ++n) {
    const bool last = n + 1 == n_steps;
    const std::optional<ComponentSet> keep = last ? options.final_step_keep : std::nullopt;
    if (with_landmarks) trace.landmark_inputs.push_back(landmarks);
    SrStepOutput<T> s = sr_.step(lr_feat, sr_feedback, landmarks, trace.lr_upsampled, variant, keep);
    sr_feedback = s.feedback;
    trace.sr_images.push_back(s.sr);
    if (!with_landmarks || (last && options.skip_final_alignment)) continue;

    const Var<T> stem = align_.stem(s.sr);
    if (n == 0) align_feedback = stem;
    AlignStepOutput<T> a = align_.step_from_stem(stem, align_feedback);
    align_feedback = a.feedback;
    landmarks = a.heatmaps;
    trace.heatmaps.push_back(a.heatmaps);
  }
  return trace;
}

template <typename T>
Tensor<T> DicNetwork<T>::infer(const Tensor<T>& lr, int n_steps, Variant variant) const {
  NoGradGuard guard;
  ForwardOptions options;
  options.skip_final_alignment = true;
  return forward(Var<T>(lr), n_steps, variant, options).final_sr().value();
}

template <typename T>
Tensor<T> DicNetwork<T>::component_ablation_render(const Tensor<T>& lr, const ComponentSet& keep,
                                                   int n_steps) const {
  NoGradGuard guard;
  ForwardOptions options;
  options.final_step_keep = keep;
  options.skip_final_alignment = true;
  return forward(Var<T>(lr), n_steps, Variant::DIC, options).final_sr().value();
}

template <typename T>
Var<T> DicNetwork<T>::attention(const Var<T>& heatmaps, const std::optional<ComponentSet>& keep) {
  Var<T> m = attention_softmax(group_components(heatmaps));
  return keep ? mask_components(m, *keep) : m;
}

template <typename T>
ParamList<T> DicNetwork<T>::parameters(Variant variant) const {
  ParamList<T> out;
  sr_.collect("sr", variant, out);
  if (uses_landmarks(variant)) align_.collect("align", out);
  return out;
}

template <typename T>
ParamList<T> DicNetwork<T>::all_parameters() const {
  ParamList<T> out;
  sr_.collect_all("sr", out);
  align_.collect("align", out);
  return out;
}

template class DicNetwork<float>;
template class DicNetwork<double>;

}  // namespace dic
