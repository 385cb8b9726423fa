// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenarios.hpp"

#include "dic/collaboration.hpp"
#include "dic/dataset.hpp"
#include "dic/losses.hpp"

namespace dic::testing {
namespace {

using Leaves = std::vector<std::pair<std::string, Var<double>>>;

void add_params(Leaves& leaves, const ParamList<double>& params) {
  for (const auto& item : params.items()) leaves.push_back(item);
}

}  // namespace

void jitter(ParamList<double>& params, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& [name, v] : params.items())
    for (auto& x : v.mutable_value().vec()) x += dist(rng);
}

GradCheckResult fusion_gradcheck(const GradCheckOptions& opt) {
  Rng rng(3);
  AttentiveFusion<double> fusion(4, 2, rng);
  ParamList<double> params;
  fusion.collect("fusion", params);
  Var<double> feature(random_tensor<double>({1, 4, 8, 8}, 11), true);
  Var<double> heatmaps(random_tensor<double>({1, kNumLandmarks, 8, 8}, 12, 0.0, 1.0), true);
  Leaves leaves{{"feature", feature}, {"heatmaps", heatmaps}};
  add_params(leaves, params);
  return gradcheck([&] { return project(fusion(feature, heatmaps), 13); }, leaves, opt);
}

GradCheckResult sr_step_gradcheck(const GradCheckOptions& opt) {
  NetworkConfig cfg;
  cfg.channels = 8;
  cfg.groups = 2;
  Rng rng(5);
  SrBranch<double> sr(cfg, rng);
  ParamList<double> params;
  sr.collect("sr", Variant::DIC, params);
  jitter(params, 6, 0.02);
  const Var<double> lr(random_tensor<double>({1, 3, 8, 8}, 21, 0.0, 1.0));
  const Var<double> up = upsample_skip(lr);
  Var<double> lr_feat(random_tensor<double>({1, 8, 16, 16}, 22), true);
  Var<double> feedback(random_tensor<double>({1, 8, 16, 16}, 23), true);
  Var<double> landmarks(random_tensor<double>({1, kNumLandmarks, 16, 16}, 24, 0.0, 1.0), true);
  Leaves leaves{{"lr_feat", lr_feat}, {"feedback", feedback}, {"landmarks", landmarks}};
  add_params(leaves, params);
  return gradcheck(
      [&] {
        const SrStepOutput<double> out = sr.step(lr_feat, feedback, landmarks, up, Variant::DIC);
        return ag::add(project(out.sr, 25), project(out.feedback, 26));
      },
      leaves, opt);
}

GradCheckResult align_step_gradcheck(const GradCheckOptions& opt) {
  NetworkConfig cfg;
  cfg.align_width = 8;  // the recurrent hourglass runs at 16 channels
  cfg.hourglass_depth = 2;
  Rng rng(7);
  AlignBranch<double> align(cfg, rng);
  ParamList<double> params;
  align.collect("align", params);
  jitter(params, 8, 0.05);
  Var<double> sr(random_tensor<double>({1, 3, 32, 32}, 31, 0.0, 1.0), true);
  Var<double> feedback(random_tensor<double>({1, 8, 8, 8}, 32), true);
  Leaves leaves{{"sr", sr}, {"feedback", feedback}};
  add_params(leaves, params);
  return gradcheck(
      [&] {
        const AlignStepOutput<double> out = align.step(sr, feedback);
        return ag::add(project(out.heatmaps, 33), project(out.feedback, 34));
      },
      leaves, opt);
}

GradCheckResult total_loss_gradcheck(const GradCheckOptions& opt) {
  NetworkConfig cfg;
  cfg.channels = 4;
  cfg.groups = 1;
  cfg.fusion_depth = 1;
  cfg.align_width = 8;
  cfg.hourglass_depth = 2;
  DicNetwork<double> net(cfg, 9);
  ParamList<double> params = net.parameters(Variant::DIC);
  jitter(params, 10, 0.02);
  const Discriminator<double> disc(2, 11);
  const RandomConvExtractor<double> phi(12);
  const Var<double> lr(random_tensor<double>({1, 3, 8, 8}, 41, 0.0, 1.0));
  const Var<double> hr(random_tensor<double>({1, 3, 64, 64}, 42, 0.0, 1.0));
  const Var<double> gt(random_tensor<double>({1, kNumLandmarks, 16, 16}, 43, 0.0, 1.0));
  Leaves leaves;
  add_params(leaves, params);
  return gradcheck(
      [&] {
        const StepTrace<double> trace = net.forward(lr, 2, Variant::DIC);
        LossParts<double> parts;
        parts.pixel = pixel_loss(trace, hr);
        parts.align = align_loss(trace, gt);
        parts.adv = g_adv_loss(disc, trace.final_sr());
        parts.perc = perceptual_loss<double>(phi, trace.final_sr(), hr);
        return total_g_loss(parts, LossWeights::gan_phase());
      },
      leaves, opt);
}

}  // namespace dic::testing
