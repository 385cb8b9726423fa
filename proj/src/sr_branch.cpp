// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/sr_branch.hpp"

#include "dic/dataset.hpp"
#include "dic/image.hpp"

namespace dic {
namespace {

// Projection geometry for a ×4 feature upscale.
constexpr int kProjKernel = 8;
constexpr ConvGeometry kProjGeom{4, 2, 1};

}  // namespace

template <typename T>
FeedbackBlock<T>::FeedbackBlock(int channels, int groups, Rng& rng) {
  for (int i = 0; i < groups; ++i) {
    if (i > 0) {
      up_compress_.emplace_back((i + 1) * channels, channels, 1, ConvGeometry{}, rng, kLeakySlope);
      down_compress_.emplace_back((i + 1) * channels, channels, 1, ConvGeometry{}, rng, kLeakySlope);
    }
    up_.emplace_back(channels, channels, kProjKernel, kProjGeom, rng, kLeakySlope);
    down_.emplace_back(channels, channels, kProjKernel, kProjGeom, rng, kLeakySlope);
  }
  compress_out_ = Conv2d<T>(groups * channels, channels, 1, ConvGeometry{}, rng, kLeakySlope);
}

template <typename T>
Var<T> FeedbackBlock<T>::operator()(const Var<T>& x) const {
  std::vector<Var<T>> lr_features{x};
  std::vector<Var<T>> hr_features;
  for (std::size_t i = 0; i < up_.size(); ++i) {
    Var<T> low = i == 0 ? x : lrelu(up_compress_[i - 1](ag::concat_channels<T>(lr_features)));
    Var<T> high = lrelu(up_[i](low));
    hr_features.push_back(high);
    if (i > 0) high = lrelu(down_compress_[i - 1](ag::concat_channels<T>(hr_features)));
    lr_features.push_back(lrelu(down_[i](high)));
  }
  const std::vector<Var<T>> outputs(lr_features.begin() + 1, lr_features.end());
  return lrelu(compress_out_(ag::concat_channels<T>(outputs)));
}

template <typename T>
void FeedbackBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < up_.size(); ++i) {
    const std::string idx = std::to_string(i);
    if (i > 0) {
      up_compress_[i - 1].collect(prefix + ".up_compress" + idx, out);
      down_compress_[i - 1].collect(prefix + ".down_compress" + idx, out);
    }
    up_[i].collect(prefix + ".up" + idx, out);
    down_[i].collect(prefix + ".down" + idx, out);
  }
  compress_out_.collect(prefix + ".compress_out", out);
}

template <typename T>
SrBranch<T>::SrBranch(const NetworkConfig& config, Rng& rng) : channels_(config.channels) {
  config.validate();
  const int c = config.channels;
  g1_conv_ = Conv2d<T>(3, 4 * c, 3, {1, 1, 1}, rng, kLeakySlope);
  init_compress_ = Conv2d<T>(c, c, 1, ConvGeometry{}, rng, kLeakySlope);
  init_core_ = FeedbackBlock<T>(c, config.groups, rng);
  compress_in_ = Conv2d<T>(2 * c, c, 1, ConvGeometry{}, rng, kLeakySlope);
  fusion_ = AttentiveFusion<T>(c, config.fusion_depth, rng);
  concat_conv_ = Conv2d<T>(c + kNumLandmarks, c, 1, ConvGeometry{}, rng, kLeakySlope);
  core_ = FeedbackBlock<T>(c, config.groups, rng);
  g2_deconv_ = ConvTranspose2d<T>(c, c, kProjKernel, kProjGeom, rng, kLeakySlope);
  g2_conv_ = Conv2d<T>(c, 3, 3, {1, 1, 1}, rng, 1.0);
  // The first step then reproduces the bicubic skip exactly.
  g2_conv_.weight.mutable_value().fill(T(0));
}

template <typename T>
Var<T> SrBranch<T>::extract_lr_features(const Var<T>& lr) const {
  if (lr.shape().c != 3) throw ShapeError("extract_lr_features: expected RGB input, got " + lr.shape().str());
  return ag::pixel_shuffle(lrelu(g1_conv_(lr)), 2);
}

template <typename T>
Var<T> SrBranch<T>::init(const Var<T>& lr_features) const {
  return init_core_(lrelu(init_compress_(lr_features)));
}

template <typename T>
SrStepOutput<T> SrBranch<T>::step(const Var<T>& lr_features, const Var<T>& feedback,
                                  const Var<T>& landmarks_prev, const Var<T>& lr_upsampled,
                                  Variant variant, const std::optional<ComponentSet>& keep) const {
  expect_shape(feedback.shape(), lr_features.shape(), "sr_step feedback");
  const Var<T> joined[] = {lr_features, feedback};
  Var<T> x = lrelu(compress_in_(ag::concat_channels<T>(joined)));
  switch (variant) {
    case Variant::DIC:
      x = fusion_(x, landmarks_prev, keep);
      break;
    case Variant::DIC_CL: {
      const Var<T> with_maps[] = {x, landmarks_prev};
      x = lrelu(concat_conv_(ag::concat_channels<T>(with_maps)));
      break;
    }
    case Variant::DIC_NL:
      break;
  }
  SrStepOutput<T> out;
  out.feedback = core_(x);
  out.sr = ag::add(generate(out.feedback), lr_upsampled);
  return out;
}

template <typename T>
Var<T> SrBranch<T>::generate(const Var<T>& feature) const {
  return g2_conv_(lrelu(g2_deconv_(feature)));
}

template <typename T>
void SrBranch<T>::collect(const std::string& prefix, Variant variant, ParamList<T>& out) const {
  g1_conv_.collect(prefix + ".g1_conv", out);
  init_compress_.collect(prefix + ".init_compress", out);
  init_core_.collect(prefix + ".init_core", out);
  compress_in_.collect(prefix + ".compress_in", out);
  if (variant == Variant::DIC) fusion_.collect(prefix + ".fusion", out);
  if (variant == Variant::DIC_CL) concat_conv_.collect(prefix + ".concat_conv", out);
  core_.collect(prefix + ".core", out);
  g2_deconv_.collect(prefix + ".g2_deconv", out);
  g2_conv_.collect(prefix + ".g2_conv", out);
}

template <typename T>
void SrBranch<T>::collect_all(const std::string& prefix, ParamList<T>& out) const {
  collect(prefix, Variant::DIC, out);
  concat_conv_.collect(prefix + ".concat_conv", out);
}

template <typename T>
Var<T> upsample_skip(const Var<T>& lr) {
  return Var<T>(bicubic_resize(lr.value(), lr.shape().h * 8, lr.shape().w * 8), false);
}

template class FeedbackBlock<float>;
template class FeedbackBlock<double>;
template class SrBranch<float>;
template class SrBranch<double>;
template Var<float> upsample_skip<float>(const Var<float>&);
template Var<double> upsample_skip<double>(const Var<double>&);

}  // namespace dic
