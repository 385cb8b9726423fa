// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/align_branch.hpp"

#include <algorithm>

#include "dic/dataset.hpp"

namespace dic {

template <typename T>
Residual<T>::Residual(int in_ch, int out_ch, Rng& rng) {
  const int mid = std::max(1, out_ch / 2);
  conv1_ = Conv2d<T>(in_ch, mid, 1, ConvGeometry{}, rng);
  conv2_ = Conv2d<T>(mid, mid, 3, {1, 1, 1}, rng);
  conv3_ = Conv2d<T>(mid, out_ch, 1, ConvGeometry{}, rng);
  // Without normalisation, stacked residual branches compound their variance;
  // each block therefore starts as its skip path.
  conv3_.weight.mutable_value().fill(T(0));
  if (in_ch != out_ch) skip_ = Conv2d<T>(in_ch, out_ch, 1, ConvGeometry{}, rng);
}

template <typename T>
Var<T> Residual<T>::operator()(const Var<T>& x) const {
  Var<T> y = conv1_(ag::relu(x));
  y = conv2_(ag::relu(y));
  y = conv3_(ag::relu(y));
  return ag::add(y, skip_.weight.defined() ? skip_(x) : x);
}

template <typename T>
void Residual<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv1_.collect(prefix + ".conv1", out);
  conv2_.collect(prefix + ".conv2", out);
  conv3_.collect(prefix + ".conv3", out);
  if (skip_.weight.defined()) skip_.collect(prefix + ".skip", out);
}

template <typename T>
Hourglass<T>::Hourglass(int depth, int channels, Rng& rng) : depth_(depth) {
  if (depth < 1) throw std::invalid_argument("hourglass depth must be positive");
  up1_ = Residual<T>(channels, channels, rng);
  low1_ = Residual<T>(channels, channels, rng);
  if (depth > 1) {
    inner_ = std::make_shared<Hourglass>(depth - 1, channels, rng);
  } else {
    bottom_ = Residual<T>(channels, channels, rng);
  }
  low3_ = Residual<T>(channels, channels, rng);
}

template <typename T>
Var<T> Hourglass<T>::operator()(const Var<T>& x) const {
  if (x.shape().h % (1 << depth_) != 0 || x.shape().w % (1 << depth_) != 0) {
    throw ShapeError("hourglass: spatial size " + x.shape().str() + " not divisible by 2^" +
                     std::to_string(depth_));
  }
  const Var<T> up = up1_(x);
  Var<T> low = low1_(ag::max_pool2(x));
  low = inner_ ? (*inner_)(low) : bottom_(low);
  low = low3_(low);
  // Both paths carry the input scale; averaging keeps it from doubling per level.
  return ag::affine(ag::add(up, ag::upsample_nearest2(low)), T(0.5), T(0));
}

template <typename T>
void Hourglass<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  up1_.collect(prefix + ".up1", out);
  low1_.collect(prefix + ".low1", out);
  if (inner_) {
    inner_->collect(prefix + ".inner", out);
  } else {
    bottom_.collect(prefix + ".bottom", out);
  }
  low3_.collect(prefix + ".low3", out);
}

template <typename T>
AlignBranch<T>::AlignBranch(const NetworkConfig& config, Rng& rng) : width_(config.align_width) {
  config.validate();
  const int w = config.align_width;
  stem_conv_ = Conv2d<T>(3, w / 4, 7, {2, 3, 1}, rng);
  stem_res1_ = Residual<T>(w / 4, w / 2, rng);
  stem_res2_ = Residual<T>(w / 2, w / 2, rng);
  stem_res3_ = Residual<T>(w / 2, w, rng);
  ar_conv_ = Conv2d<T>(2 * w, 2 * w, 1, ConvGeometry{}, rng);
  hourglass_ = Hourglass<T>(config.hourglass_depth, 2 * w, rng);
  lin_ = Conv2d<T>(2 * w, 2 * w, 1, ConvGeometry{}, rng);
  head1_ = Conv2d<T>(w, w, 1, ConvGeometry{}, rng);
  head2_ = Conv2d<T>(w, kNumLandmarks, 1, ConvGeometry{}, rng, 1.0);
  // Heatmaps start flat; a large initial error drives the head ReLUs dead.
  head2_.weight.mutable_value().fill(T(0));
}

template <typename T>
Var<T> AlignBranch<T>::stem(const Var<T>& sr) const {
  if (sr.shape().c != 3) throw ShapeError("alignment stem: expected RGB input, got " + sr.shape().str());
  Var<T> x = ag::relu(stem_conv_(sr));
  x = stem_res1_(x);
  x = ag::max_pool2(x);
  x = stem_res2_(x);
  return stem_res3_(x);
}

template <typename T>
Var<T> AlignBranch<T>::recur(const Var<T>& stem_feature, const Var<T>& feedback) const {
  expect_shape(feedback.shape(), stem_feature.shape(), "align_step feedback");
  const Var<T> joined[] = {stem_feature, feedback};
  Var<T> x = ag::relu(ar_conv_(ag::concat_channels<T>(joined)));
  x = hourglass_(x);
  return ag::relu(lin_(x));
}

template <typename T>
Var<T> AlignBranch<T>::head(const Var<T>& x) const {
  return head2_(ag::relu(head1_(x)));
}

template <typename T>
AlignStepOutput<T> AlignBranch<T>::step_from_stem(const Var<T>& stem_feature,
                                                  const Var<T>& feedback) const {
  const Var<T> trunk = recur(stem_feature, feedback);
  AlignStepOutput<T> out;
  out.feedback = ag::slice_channels(trunk, 0, width_);
  out.heatmaps = head(ag::slice_channels(trunk, width_, width_));
  return out;
}

template <typename T>
void AlignBranch<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  stem_conv_.collect(prefix + ".stem_conv", out);
  stem_res1_.collect(prefix + ".stem_res1", out);
  stem_res2_.collect(prefix + ".stem_res2", out);
  stem_res3_.collect(prefix + ".stem_res3", out);
  ar_conv_.collect(prefix + ".ar_conv", out);
  hourglass_.collect(prefix + ".hourglass", out);
  lin_.collect(prefix + ".lin", out);
  head1_.collect(prefix + ".head1", out);
  head2_.collect(prefix + ".head2", out);
}

template class Residual<float>;
template class Residual<double>;
template class Hourglass<float>;
template class Hourglass<double>;
template class AlignBranch<float>;
template class AlignBranch<double>;

}  // namespace dic
